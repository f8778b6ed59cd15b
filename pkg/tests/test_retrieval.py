import json
import random
import tempfile
import unittest
from pathlib import Path

from chain_audit.cache import ContentCache
from chain_audit.errors import QuotaExhaustedError
from chain_audit.retrieval import (
    DEFAULT_PATTERNS,
    LICENSE_REGEX,
    NO_EXTENSION,
    README_REGEX,
    CoverageCategory,
    FileClass,
    RetrievalPatterns,
    RetrievedFile,
    TreeEntry,
    classify_path,
    coverage_summary,
    fetch_files,
    file_extension_histogram,
    load_tree_listing,
    select_files,
    validate_retrieval_coverage,
)


class TestClassifyPath(unittest.TestCase):
    def test_root_license_files(self):
        for path in ["LICENSE", "LICENSE.md", "pkg.license.txt", "COPYING", "NOTICE", "Model_License.txt"]:
            self.assertEqual(FileClass.ROOT_LICENSE, classify_path(path), path)

    def test_readmes(self):
        for path in ["README.md", "READ_ME.rst", "docs/readme.txt", "Read-Me"]:
            self.assertEqual(FileClass.README, classify_path(path), path)

    def test_scattered_and_directory_licenses(self):
        self.assertEqual(FileClass.SCATTERED_LICENSE, classify_path("src/third_party/LICENSE"))
        self.assertEqual(FileClass.DIRECTORY_LICENSE, classify_path("legal/attribution.txt"))
        self.assertEqual(FileClass.DIRECTORY_LICENSE, classify_path("Licenses/apache.txt"))

    def test_unrelated_files(self):
        for path in ["main.py", "src/licensing_utils.py", "data/train.csv", "readme_generator.py"]:
            self.assertEqual(FileClass.NONE, classify_path(path), path)

    def test_path_normalization(self):
        self.assertEqual(FileClass.ROOT_LICENSE, classify_path("./LICENSE"))
        self.assertEqual(FileClass.SCATTERED_LICENSE, classify_path("vendor\\lib\\COPYING"))

    def test_custom_patterns(self):
        patterns = RetrievalPatterns(license_keywords=["eula"], license_directories=["policy"],
                                     readme_patterns=["about"])
        self.assertEqual(FileClass.ROOT_LICENSE, classify_path("EULA.txt", patterns))
        self.assertEqual(FileClass.NONE, classify_path("LICENSE", patterns))
        self.assertEqual(FileClass.DIRECTORY_LICENSE, classify_path("policy/x.md", patterns))
        self.assertEqual(FileClass.README, classify_path("ABOUT.md", patterns))

    def test_default_patterns_use_module_regexes(self):
        self.assertEqual(LICENSE_REGEX, DEFAULT_PATTERNS.license_re.pattern)
        self.assertEqual(README_REGEX, DEFAULT_PATTERNS.readme_re.pattern)

    def test_case_does_not_matter(self):
        rng = random.Random(7)
        dirs = ["src", "legal", "Licenses", "docs", "third_party", "weights"]
        names = ["LICENSE", "readme", "COPYING", "main", "notice", "data", "model_card", "Read-Me"]
        exts = ["", ".md", ".txt", ".py", ".json"]
        for _ in range(200):
            parts = [rng.choice(dirs) for _ in range(rng.randint(0, 3))]
            path = "/".join(parts + [rng.choice(names) + rng.choice(exts)])
            flipped = "".join(c.swapcase() if rng.random() < 0.5 else c for c in path)
            self.assertEqual(classify_path(path), classify_path(flipped), (path, flipped))


class TestSelectFiles(unittest.TestCase):
    def test_plan(self):
        tree = [
            TreeEntry("README.md", 100),
            TreeEntry("model.safetensors", 10**9),
            TreeEntry("LICENSE", 1000),
            TreeEntry("weights/LICENSE", 2000),
            TreeEntry("NOTICE", 400 * 2**20),
            TreeEntry("docs/README.md", None),
        ]
        plan = select_files(tree)
        self.assertEqual(["LICENSE", "README.md", "docs/README.md", "weights/LICENSE"], plan.paths)
        self.assertEqual([{"path": "NOTICE", "size_bytes": 400 * 2**20, "reason": "oversize"}], plan.skipped)
        self.assertEqual({"license": ["LICENSE", "weights/LICENSE"], "readme.md": ["README.md", "docs/README.md"]},
                         plan.duplicates)

    def test_size_cap_boundary(self):
        plan = select_files([TreeEntry("LICENSE", 10), TreeEntry("COPYING", 11)], max_bytes=10)
        self.assertEqual(["LICENSE"], plan.paths)
        self.assertEqual("COPYING", plan.skipped[0]["path"])

    def test_plan_only_holds_input_paths(self):
        rng = random.Random(11)
        names = ["LICENSE", "README.md", "main.py", "legal/terms.txt", "src/COPYING", "data.csv", "NOTICE"]
        for _ in range(200):
            tree = [TreeEntry(rng.choice(names), rng.choice([None, 5, 50])) for _ in range(rng.randint(0, 6))]
            plan = select_files(tree, max_bytes=20)
            inputs = {e.path for e in tree}
            self.assertTrue(set(plan.paths) <= inputs, tree)
            self.assertTrue({s["path"] for s in plan.skipped} <= inputs, tree)
            self.assertTrue(all(classify_path(p) != FileClass.NONE for p in plan.paths), tree)


class TestFetchFiles(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.cache = ContentCache(Path(self.tmp.name))

    def tearDown(self):
        self.tmp.cleanup()

    def test_failures_are_recorded_per_path(self):
        contents = {"LICENSE": b"MIT License", "README.md": b"# hi"}

        def client(path):
            if path not in contents:
                raise FileNotFoundError(path)
            return contents[path]

        plan = select_files([TreeEntry("LICENSE"), TreeEntry("README.md"), TreeEntry("NOTICE")])
        result = fetch_files("org/x", plan, client, cache=self.cache)
        self.assertEqual(["LICENSE", "README.md"], [f.path for f in result.files])
        self.assertEqual("NOTICE", result.failures[0]["path"])
        self.assertFalse(result.unretrievable)
        self.assertEqual(b"MIT License", self.cache.get("org/x", "LICENSE"))
        self.assertEqual(result.files[0].sha256, self.cache.index["org/x"]["LICENSE"])

    def test_unknown_size_is_checked_when_fetched(self):
        plan = select_files([TreeEntry("LICENSE")], max_bytes=4)
        result = fetch_files("org/x", plan, lambda path: b"too long", max_bytes=4)
        self.assertEqual([], result.files)
        self.assertTrue(result.unretrievable)

    def test_invalid_utf8_is_replaced(self):
        data = b"Copyright \xff\xfe 2020 Acme\n"
        result = fetch_files("org/x", select_files([TreeEntry("LICENSE")]), lambda path: data, cache=self.cache)
        self.assertEqual([], result.failures)
        self.assertEqual("Copyright �� 2020 Acme\n", result.files[0].content)
        self.assertEqual(len(data), result.files[0].size_bytes)
        self.assertEqual(data, self.cache.get("org/x", "LICENSE"))

    def test_quota_errors_propagate(self):
        def client(path):
            raise QuotaExhaustedError("quota")

        with self.assertRaises(QuotaExhaustedError):
            fetch_files("org/x", select_files([TreeEntry("LICENSE")]), client)

    def test_identical_content_is_stored_once(self):
        a = self.cache.put("org/a", "LICENSE", b"same")
        b = self.cache.put("org/b", "COPYING", b"same")
        self.assertEqual(a, b)
        self.assertEqual(1, len(list((self.cache.objects).rglob("*"))) - 1)
        self.cache.flush()
        reopened = ContentCache(Path(self.tmp.name))
        self.assertEqual(b"same", reopened.get("org/b", "COPYING"))

    def test_retrieved_file_rejects_unclassified(self):
        with self.assertRaises(ValueError):
            RetrievedFile("org/x", "main.py", FileClass.NONE, 1, "x")


class TestRetrievalCoverage(unittest.TestCase):
    def test_categories(self):
        self.assertEqual(CoverageCategory.PERFECT_MATCH, validate_retrieval_coverage({"MIT"}, {"MIT"}).category)
        self.assertEqual(CoverageCategory.PERFECT_MATCH,
                         validate_retrieval_coverage({"MIT", "Apache-2.0"}, {"MIT"}).category)
        self.assertEqual(CoverageCategory.PARTIAL_MATCH,
                         validate_retrieval_coverage({"MIT"}, {"MIT", "Apache-2.0"}).category)
        self.assertEqual(CoverageCategory.COMPLETE_MISS, validate_retrieval_coverage(set(), {"MIT"}).category)
        self.assertEqual(CoverageCategory.PERFECT_MATCH, validate_retrieval_coverage(set(), set()).category)

    def test_reflexive(self):
        for found in [set(), {"MIT"}, {"MIT", "BSD-3-Clause", "Apache-2.0"}]:
            self.assertEqual(CoverageCategory.PERFECT_MATCH, validate_retrieval_coverage(found, found).category)

    def test_summary_table(self):
        perfect = validate_retrieval_coverage({"MIT"}, {"MIT"})
        partial = validate_retrieval_coverage({"MIT"}, {"MIT", "GPL-3.0"})
        miss = validate_retrieval_coverage(set(), {"MIT"})
        rows = {r["category"]: r for r in coverage_summary({"model": [perfect, perfect, miss],
                                                            "dataset": [partial]})}
        self.assertEqual(2, rows["Perfect Match"]["model"])
        self.assertEqual(1, rows["Partial Match"]["dataset"])
        self.assertEqual(3, rows["Any Match"]["Combined"])
        self.assertEqual(1, rows["Complete Miss"]["Combined"])
        self.assertEqual(4, rows["Total"]["Combined"])


class TestExtensionHistogram(unittest.TestCase):
    def test_ranking(self):
        paths = ["a.py", "b.PY", "c.py", "d.md", "Makefile", "LICENSE", "e.json", "f.md"]
        rows = file_extension_histogram(paths)
        self.assertEqual([".py", ".md", NO_EXTENSION, ".json"], [r["extension"] for r in rows])
        self.assertEqual(3, rows[0]["count"])
        self.assertAlmostEqual(37.5, rows[0]["percent"])
        self.assertAlmostEqual(100.0 * 2 / 3, rows[1]["percent_of_py"])
        self.assertEqual(2, len(file_extension_histogram(paths, top_n=2)))

    def test_no_python_files(self):
        rows = file_extension_histogram(["x.md"])
        self.assertIsNone(rows[0]["percent_of_py"])

    def test_tree_listing(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trees.jsonl"
            path.write_text("\n".join([
                json.dumps({"id": "a/b", "path": "LICENSE", "size_bytes": 10}),
                json.dumps({"id": "a/b", "path": "x.py"}),
                json.dumps({"id": "c/d", "path": "README.md", "size_bytes": 3}),
            ]), encoding="utf-8")
            trees = load_tree_listing(path)
        self.assertEqual([TreeEntry("LICENSE", 10), TreeEntry("x.py", None)], trees["a/b"])
        self.assertEqual(["README.md"], [e.path for e in trees["c/d"]])


if __name__ == "__main__":
    unittest.main()
