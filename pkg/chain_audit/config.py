import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from chain_audit.errors import ConfigError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_TEMPLATE_DIR = DATA_DIR / "templates"
DEFAULT_ALIAS_FILE = DATA_DIR / "aliases.txt"
DEFAULT_CATEGORY_FILE = DATA_DIR / "categories.txt"
DEFAULT_SIGNATURE_FILE = DATA_DIR / "signatures.txt"

HUB_TOKEN_ENV = "CHAINAUDIT_HUB_TOKEN"
FORGE_TOKEN_ENV = "CHAINAUDIT_FORGE_TOKEN"
CACHE_DIR_ENV = "CHAINAUDIT_CACHE_DIR"

CREDENTIAL_KEYS = {"hub_token", "forge_token", "token", "api_key", "password"}


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_DIR_ENV)
    if env:
        return Path(env)
    return Path(os.path.expanduser("~/.cache/chainaudit"))


@dataclass
class PipelineConfig:
    """
    Parameters of one audit run.

    Thresholds default to the methodology constants: one like / one star to
    enter the corpus, 90% template coverage for present license text and a
    300 MB per-file retrieval cap.
    """

    snapshots: List[Path] = field(default_factory=list)
    repos_dir: Optional[Path] = None
    cache_dir: Path = field(default_factory=default_cache_dir)
    output_dir: Path = Path("chainaudit-out")
    template_dir: Path = DEFAULT_TEMPLATE_DIR
    alias_file: Path = DEFAULT_ALIAS_FILE
    category_file: Path = DEFAULT_CATEGORY_FILE
    signature_file: Path = DEFAULT_SIGNATURE_FILE
    resolver_cache: Optional[Path] = None

    min_likes: int = 1
    min_stars: int = 1
    coverage_threshold: float = 0.90
    detection_noise_floor: float = 0.05
    max_file_mb: float = 300
    permissive_labels: List[str] = field(default_factory=lambda: ["mit", "apache-2.0", "bsd-3-clause"])
    top_orgs: int = 15
    validate_usage: bool = True
    workers: int = 8

    license_keywords: Optional[List[str]] = None
    license_directories: Optional[List[str]] = None
    readme_patterns: Optional[List[str]] = None

    live: bool = False
    hub_endpoint: str = "https://huggingface.co"
    forge_endpoint: str = "https://api.github.com"
    rate_limit: float = 1.0
    max_retries: int = 5

    hub_token: Optional[str] = field(default=None, repr=False)
    forge_token: Optional[str] = field(default=None, repr=False)

    @property
    def max_file_bytes(self) -> int:
        return int(self.max_file_mb * 2**20)

    def validate(self, require_inputs=True):
        """Check ranges and input paths; raises ConfigError naming the problem."""
        if not 0 < self.coverage_threshold <= 1:
            raise ConfigError(f"coverage_threshold must be in (0, 1], got {self.coverage_threshold}")
        if not 0 <= self.detection_noise_floor < self.coverage_threshold:
            raise ConfigError("detection_noise_floor must be in [0, coverage_threshold)")
        if self.min_likes < 0 or self.min_stars < 0:
            raise ConfigError("engagement minimums must be non-negative")
        if self.max_file_mb <= 0:
            raise ConfigError(f"max_file_mb must be positive, got {self.max_file_mb}")
        if self.top_orgs < 1:
            raise ConfigError(f"top_orgs must be at least 1, got {self.top_orgs}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.rate_limit <= 0:
            raise ConfigError(f"rate_limit must be positive, got {self.rate_limit}")
        if not self.permissive_labels:
            raise ConfigError("permissive_labels must not be empty")

        if not self.template_dir.is_dir():
            raise ConfigError(f"Template directory not found: {self.template_dir}")
        for path in (self.alias_file, self.category_file, self.signature_file):
            if not path.is_file():
                raise ConfigError(f"Data file not found: {path}")
        if require_inputs:
            for path in self.snapshots:
                if not path.is_file():
                    raise ConfigError(f"Snapshot not found: {path}")
            if self.repos_dir is not None and not self.repos_dir.is_dir():
                raise ConfigError(f"Repository directory not found: {self.repos_dir}")
        return self

    def with_credentials(self, environ=None):
        environ = os.environ if environ is None else environ
        return replace(
            self,
            hub_token=environ.get(HUB_TOKEN_ENV) or None,
            forge_token=environ.get(FORGE_TOKEN_ENV) or None,
        )

    def parameters(self) -> Dict[str, Any]:
        """Parameter values recorded in the run manifest (no credentials, no machine paths)."""
        return {
            "min_likes": self.min_likes,
            "min_stars": self.min_stars,
            "coverage_threshold": self.coverage_threshold,
            "detection_noise_floor": self.detection_noise_floor,
            "max_file_mb": self.max_file_mb,
            "permissive_labels": sorted(self.permissive_labels),
            "top_orgs": self.top_orgs,
            "validate_usage": self.validate_usage,
            "license_keywords": self.license_keywords,
            "license_directories": self.license_directories,
            "readme_patterns": self.readme_patterns,
            "live": self.live,
        }


PATH_FIELDS = {"repos_dir", "cache_dir", "output_dir", "template_dir", "alias_file",
               "category_file", "signature_file", "resolver_cache"}


def _coerce(name, value):
    if value is None:
        return None
    if name == "snapshots":
        return [Path(v) for v in value]
    if name in PATH_FIELDS:
        return Path(value).expanduser()
    return value


def load_config(path=None, overrides=None) -> PipelineConfig:
    """
    Build a PipelineConfig from defaults, an optional TOML/JSON file and overrides.

    Args:
        path: a ``.toml`` or ``.json`` file. Values may sit at top level or in a
            ``[chainaudit]`` table.
        overrides (dict): values from the command line; ``None`` entries are ignored.
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            if path.suffix == ".toml":
                with open(path, "rb") as f:
                    raw = tomllib.load(f)
            else:
                with open(path, "r", encoding="utf-8") as f:
                    raw = json.load(f)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot parse config file {path}: {e}") from e
        values.update(raw.get("chainaudit", raw))
        leaked = CREDENTIAL_KEYS & set(values)
        if leaked:
            raise ConfigError(
                f"Credentials are read from {HUB_TOKEN_ENV}/{FORGE_TOKEN_ENV} only; "
                f"remove {sorted(leaked)} from {path}"
            )

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    known = {f.name for f in fields(PipelineConfig)} - {"hub_token", "forge_token"}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")

    config = PipelineConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return config.with_credentials()
