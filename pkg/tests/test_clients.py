import json
import tempfile
import unittest
from pathlib import Path
from types import SimpleNamespace
from unittest import mock

from chain_audit.cache import ResolverCache
from chain_audit.clients import (
    ForgeClient,
    HubClient,
    KindRouter,
    LocalRepositoryClient,
    backoff_delay,
    fetch_live,
    resolve_dataset_aliases,
)
from chain_audit.errors import AuthError, QuotaExhaustedError, RetriableFetchError
from chain_audit.retrieval import TreeEntry
from tests.helpers import REPOS


def response(status=200, body=None, content=b"", headers=None):
    resp = mock.Mock()
    resp.status_code = status
    resp.headers = headers or {}
    resp.json.return_value = body
    resp.content = content
    return resp


def stub_session(*responses):
    session = mock.Mock()
    session.headers = {}
    session.get.side_effect = list(responses)
    return session


class TestLocalRepositoryClient(unittest.TestCase):
    def setUp(self):
        self.client = LocalRepositoryClient(REPOS)

    def test_tree_and_read(self):
        tree = self.client.tree("dataset", "acme/reviews")
        self.assertEqual(["LICENSE", "README.md"], [e.path for e in tree])
        self.assertTrue(all(e.size_bytes > 0 for e in tree))
        self.assertTrue(self.client.read("dataset", "acme/reviews", "LICENSE").startswith(b"MIT License"))

    def test_missing_repository(self):
        with self.assertRaises(FileNotFoundError):
            self.client.tree("model", "nobody/nothing")

    def test_paths_cannot_escape(self):
        with self.assertRaises(FileNotFoundError):
            self.client.read("dataset", "acme/reviews", "../../../models/acme/sentiment-ft/LICENSE")


class TestForgeClient(unittest.TestCase):
    def client(self, *responses, **kwargs):
        self.sleeps = []
        return ForgeClient(token="t", rate_limit=1000, session=stub_session(*responses),
                           sleep=self.sleeps.append, **kwargs)

    def test_requires_token(self):
        with self.assertRaises(AuthError):
            ForgeClient(token=None)

    def test_quota_exhausted(self):
        client = self.client(response(403, headers={"X-RateLimit-Remaining": "0", "X-RateLimit-Reset": "1700000000"}))
        with self.assertRaises(QuotaExhaustedError) as ctx:
            client.tree("application", "me/app")
        self.assertEqual(1700000000, ctx.exception.reset_at)

    def test_bad_token(self):
        with self.assertRaises(AuthError):
            self.client(response(401)).tree("application", "me/app")

    def test_server_errors_back_off(self):
        client = self.client(response(502), response(200, {"default_branch": "dev"}),
                             response(200, {"tree": [{"path": "LICENSE", "type": "blob", "size": 5},
                                                     {"path": "src", "type": "tree"}]}))
        self.assertEqual([TreeEntry("LICENSE", 5)], client.tree("application", "me/app"))
        self.assertEqual([1.0], self.sleeps)
        self.assertIn("/git/trees/dev", client.session.get.call_args.args[0])

    def test_gives_up(self):
        client = self.client(response(503), response(503), response(503), max_retries=2)
        with self.assertRaises(RetriableFetchError):
            client.tree("application", "me/app")
        self.assertEqual([1.0, 2.0, 4.0], self.sleeps)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            self.client(response(404)).read("application", "me/app", "LICENSE")

    def test_discover_and_record(self):
        client = self.client(
            response(200, {"items": [
                {"path": "app.py", "repository": {"full_name": "me/app"}},
                {"path": "README.md", "repository": {"full_name": "me/docs"}},
            ]}),
            response(200, {"full_name": "me/app", "default_branch": "main", "license": {"spdx_id": "MIT"},
                           "stargazers_count": 4, "owner": {"login": "me"}}),
            response(200, content=b'model = AutoModel.from_pretrained("acme/bert")\n'),
            response(200, {"followers": 9}),
        )
        self.assertEqual(["me/app"], client.discover(["acme/bert"]))
        self.assertEqual('"acme/bert"', client.session.get.call_args.kwargs["params"]["q"])
        self.assertEqual([{"id": "me/app", "path": "app.py"}, {"id": "me/docs", "path": "README.md"}],
                         client.hit_listing())
        self.assertEqual({
            "id": "me/app", "kind": "application", "platform": "forge", "license": "MIT", "engagement": 4,
            "organization": "me", "followers": 9, "models": ["acme/bert"],
            "sources": {"app.py": 'model = AutoModel.from_pretrained("acme/bert")\n'},
        }, client.record("application", "me/app"))


class TestHubClient(unittest.TestCase):
    def test_record(self):
        api = mock.Mock()
        api.model_info.return_value = SimpleNamespace(
            id="acme/bert", author="acme", likes=3,
            card_data=SimpleNamespace(to_dict=lambda: {"license": "apache-2.0", "datasets": ["acme/corpus"]}),
        )
        client = HubClient(api=api, rate_limit=1000, session=stub_session(response(200, {"numFollowers": 12})))
        self.assertEqual({
            "id": "acme/bert", "kind": "model", "platform": "hub", "license": "apache-2.0", "engagement": 3,
            "organization": "acme", "followers": 12, "datasets": ["acme/corpus"], "base_model": None,
        }, client.record("model", "acme/bert"))

    def test_tree_and_read(self):
        api = mock.Mock()
        api.dataset_info.return_value = SimpleNamespace(siblings=[SimpleNamespace(rfilename="LICENSE", size=10)])
        sleeps = []
        client = HubClient(api=api, rate_limit=1000, sleep=sleeps.append,
                           session=stub_session(response(429), response(200, content=b"MIT"), response(404)))
        self.assertEqual([TreeEntry("LICENSE", 10)], client.tree("dataset", "acme/set"))
        self.assertEqual(b"MIT", client.read("dataset", "acme/set", "LICENSE"))
        self.assertEqual([1.0], sleeps)
        self.assertIn("/datasets/acme/set/resolve/main/LICENSE", client.session.get.call_args.args[0])
        with self.assertRaises(FileNotFoundError):
            client.read("model", "acme/bert", "NOTICE")

    def test_resolve_dataset(self):
        api = mock.Mock()
        api.dataset_info.side_effect = lambda ref: SimpleNamespace(id="rajpurkar/squad") if ref == "squad" else None
        api.list_datasets.return_value = [SimpleNamespace(id="a/glue"), SimpleNamespace(id="b/glue-extra"),
                                          SimpleNamespace(id="c/cola")]
        client = HubClient(api=api, rate_limit=1000, session=stub_session())
        self.assertEqual("rajpurkar/squad", client.resolve_dataset("squad"))
        self.assertEqual("a/glue", client.resolve_dataset("glue"))
        self.assertIsNone(client.resolve_dataset("org/missing"))
        api.list_datasets.assert_called_once_with(search="glue", limit=100)


class StubClient:
    def __init__(self, records, fail_on=None):
        self.records = records
        self.fail_on = fail_on
        self.calls = []

    def record(self, kind, artifact_id):
        if artifact_id == self.fail_on:
            raise QuotaExhaustedError("quota")
        self.calls.append(artifact_id)
        return self.records.get(artifact_id)


class TestFetchLive(unittest.TestCase):
    def test_resume_after_quota(self):
        records = {i: {"id": i, "kind": "model", "engagement": 1} for i in ["a/1", "b/2", "c/3"]}
        with tempfile.TemporaryDirectory() as tmp:
            cache_path = Path(tmp) / "resolver.json"
            out = Path(tmp) / "out" / "models.jsonl"
            ids = ["c/3", "zz/none", "a/1", "b/2", "a/1", " "]

            first = StubClient(records, fail_on="c/3")
            with self.assertRaises(QuotaExhaustedError):
                fetch_live("hub", "model", ids, first, ResolverCache(cache_path), out)
            self.assertEqual(["a/1", "b/2"], first.calls)
            self.assertIn("hub:model:b/2", ResolverCache(cache_path))

            second = StubClient(records)
            report = fetch_live("hub", "model", ids, second, ResolverCache(cache_path), out)
            self.assertEqual(["c/3", "zz/none"], second.calls)
            self.assertEqual((4, 2, ["zz/none"], 3), (report.requested, report.cached, report.unresolved,
                                                      report.written))
            lines = out.read_text(encoding="utf-8").splitlines()
        self.assertEqual(["a/1", "b/2", "c/3"], [json.loads(line)["id"] for line in lines])


class TestDatasetAliases(unittest.TestCase):
    def test_misses_are_cached_too(self):
        asked = []

        def resolver(ref):
            asked.append(ref)
            return "acme/corpus" if ref == "corpus" else None

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "resolver.json"
            aliases = resolve_dataset_aliases(["corpus", " corpus ", "nope", ""], resolver, ResolverCache(path))
            self.assertEqual({"corpus": "acme/corpus"}, aliases)
            self.assertEqual(aliases, resolve_dataset_aliases(["corpus", "nope"], resolver, ResolverCache(path)))
        self.assertEqual(["corpus", "nope"], asked)


class TestRouting(unittest.TestCase):
    def test_kind_router(self):
        hub, forge = mock.Mock(), mock.Mock()
        router = KindRouter(hub, forge)
        router.tree("application", "me/app")
        router.read("model", "acme/bert", "LICENSE")
        forge.tree.assert_called_once_with("application", "me/app")
        hub.read.assert_called_once_with("model", "acme/bert", "LICENSE")

    def test_backoff_delay(self):
        self.assertEqual([1.0, 2.0, 8.0, 60.0], [backoff_delay(n) for n in (0, 1, 3, 10)])


if __name__ == "__main__":
    unittest.main()
