import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from chain_audit.config import (
    CACHE_DIR_ENV,
    FORGE_TOKEN_ENV,
    HUB_TOKEN_ENV,
    PipelineConfig,
    default_cache_dir,
    load_config,
)
from chain_audit.errors import ConfigError
from tests.helpers import REPOS, SNAPSHOTS


class TestLoadConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults(self):
        config = load_config()
        self.assertEqual((1, 1, 0.9, 15), (config.min_likes, config.min_stars, config.coverage_threshold,
                                           config.top_orgs))
        self.assertEqual(300 * 2**20, config.max_file_bytes)
        self.assertEqual(["mit", "apache-2.0", "bsd-3-clause"], config.permissive_labels)
        self.assertTrue(config.validate_usage)
        config.validate(require_inputs=False)

    def test_toml_table_and_overrides(self):
        path = self.dir / "audit.toml"
        path.write_text('[chainaudit]\nmin_likes = 5\ntop_orgs = 3\nrepos_dir = "repos"\n'
                        'snapshots = ["a.jsonl", "b.jsonl"]\n', encoding="utf-8")
        config = load_config(path, {"top_orgs": 7, "min_stars": None})
        self.assertEqual((5, 7, 1), (config.min_likes, config.top_orgs, config.min_stars))
        self.assertEqual(Path("repos"), config.repos_dir)
        self.assertEqual([Path("a.jsonl"), Path("b.jsonl")], config.snapshots)

    def test_json_top_level(self):
        path = self.dir / "audit.json"
        path.write_text(json.dumps({"coverage_threshold": 0.8, "permissive_labels": ["mit"]}), encoding="utf-8")
        config = load_config(path)
        self.assertEqual((0.8, ["mit"]), (config.coverage_threshold, config.permissive_labels))

    def test_credentials_in_file_are_rejected(self):
        path = self.dir / "audit.toml"
        path.write_text('hub_token = "hf_secret"\n', encoding="utf-8")
        with self.assertRaises(ConfigError) as ctx:
            load_config(path)
        self.assertIn(HUB_TOKEN_ENV, str(ctx.exception))
        self.assertNotIn("hf_secret", str(ctx.exception))

    def test_unknown_and_unparseable(self):
        path = self.dir / "audit.toml"
        path.write_text("min_like = 3\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_config(path)
        path.write_text("min_likes = \n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_config(path)
        with self.assertRaises(ConfigError):
            load_config(self.dir / "absent.toml")

    def test_tokens_come_from_environment(self):
        with mock.patch.dict(os.environ, {HUB_TOKEN_ENV: "hf_abc123", FORGE_TOKEN_ENV: ""}):
            config = load_config()
        self.assertEqual(("hf_abc123", None), (config.hub_token, config.forge_token))
        self.assertNotIn("hf_abc123", repr(config))
        self.assertNotIn("hub_token", config.parameters())

    def test_cache_dir_environment(self):
        with mock.patch.dict(os.environ, {CACHE_DIR_ENV: str(self.dir)}):
            self.assertEqual(self.dir, default_cache_dir())
            self.assertEqual(self.dir, PipelineConfig().cache_dir)


class TestValidate(unittest.TestCase):
    def test_ranges(self):
        for overrides in [
            {"coverage_threshold": 0.0},
            {"coverage_threshold": 1.5},
            {"detection_noise_floor": 0.95},
            {"min_likes": -1},
            {"max_file_mb": 0},
            {"top_orgs": 0},
            {"workers": 0},
            {"permissive_labels": []},
        ]:
            with self.assertRaises(ConfigError, msg=str(overrides)):
                PipelineConfig(**overrides).validate(require_inputs=False)

    def test_input_paths(self):
        PipelineConfig(snapshots=list(SNAPSHOTS), repos_dir=REPOS).validate()
        with self.assertRaises(ConfigError):
            PipelineConfig(snapshots=[Path("missing.jsonl")]).validate()
        with self.assertRaises(ConfigError):
            PipelineConfig(repos_dir=Path("missing-dir")).validate()
        PipelineConfig(snapshots=[Path("missing.jsonl")]).validate(require_inputs=False)
        with self.assertRaises(ConfigError):
            PipelineConfig(template_dir=Path("missing-templates")).validate(require_inputs=False)


if __name__ == "__main__":
    unittest.main()
