import random
import unittest

from chain_audit.config import DEFAULT_TEMPLATE_DIR
from chain_audit.license_engine import (
    LicenseCategory,
    LicenseTemplate,
    TemplateCorpus,
    card_license,
    categorize_license,
    detect_licenses,
    extract_copyrights,
    find_license_references,
    is_permissive_label,
    lcs_length,
    load_templates,
    match_license,
    normalize_label,
    present_licenses,
    strip_placeholders,
    tokenize,
)
from chain_audit.retrieval import FileClass
from tests.helpers import mit_license, retrieved, template_text


def naive_lcs(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


class TestTokens(unittest.TestCase):
    def test_tokenize(self):
        self.assertEqual(["hello", "world", "2024", "naïve"], tokenize("Hello, World_2024 -- naïve!"))

    def test_placeholders_and_appendix_are_stripped(self):
        self.assertEqual(["copyright", "c"], tokenize(strip_placeholders("Copyright (c) <year> [name of owner]")))
        apache = LicenseTemplate.from_text("Apache-2.0", template_text("Apache-2.0"))
        self.assertNotIn("boilerplate", apache.tokens)
        gpl = LicenseTemplate.from_text("GPL-3.0", template_text("GPL-3.0"))
        self.assertNotIn("hypothetical", gpl.tokens)


class TestLcs(unittest.TestCase):
    def test_matches_dynamic_programming(self):
        rng = random.Random(1234)
        vocab = ["a", "b", "c", "d", "e", "f"]
        for _ in range(300):
            doc = [rng.choice(vocab) for _ in range(rng.randint(0, 90))]
            tmpl = [rng.choice(vocab) for _ in range(rng.randint(0, 90))]
            self.assertEqual(naive_lcs(doc, tmpl), lcs_length(doc, tmpl), (doc, tmpl))

    def test_edge_cases(self):
        self.assertEqual(0, lcs_length([], ["a"]))
        self.assertEqual(0, lcs_length(["a"], []))
        self.assertEqual(3, lcs_length(list("xaybzc"), list("abc")))


class TestLicenseDetection(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.corpus = load_templates(DEFAULT_TEMPLATE_DIR)

    def test_every_template_covers_itself(self):
        for template in self.corpus:
            self.assertEqual(1.0, self.corpus.coverage(tokenize(template.canonical_text), template), template.spdx_id)

    def test_truncated_license(self):
        mit = self.corpus.for_label("mit")
        keep = mit.tokens[:int(0.7 * len(mit.tokens))]
        self.assertAlmostEqual(0.70, match_license(keep, mit), delta=0.01)

    def test_deleting_tokens_never_raises_coverage(self):
        rng = random.Random(99)
        for template in self.corpus:
            doc = tokenize(template.canonical_text) + ["extra", "words", "2024"]
            last = match_license(doc, template)
            while doc:
                for _ in range(rng.randint(1, len(doc) // 8 + 1)):
                    del doc[rng.randrange(len(doc))]
                current = match_license(doc, template)
                self.assertLessEqual(current, last, template.spdx_id)
                self.assertEqual(current, self.corpus.coverage(doc, template), template.spdx_id)
                last = current
            self.assertEqual(0.0, last)

    def test_filled_in_license_is_present(self):
        detections = detect_licenses([retrieved("LICENSE", mit_license()), retrieved("README.md", "# Hello")],
                                     self.corpus)
        best = {d.spdx_id: d for d in detections if d.file_path == "LICENSE"}
        self.assertEqual(1.0, best["MIT"].coverage)
        self.assertTrue(best["MIT"].is_present())
        self.assertEqual(FileClass.ROOT_LICENSE, best["MIT"].location_class)
        self.assertFalse(any(d.file_path == "README.md" for d in detections))

    def test_missing_paragraph_drops_below_threshold(self):
        text = mit_license().split('THE SOFTWARE IS PROVIDED "AS IS"')[0]
        detections = detect_licenses([retrieved("LICENSE", text)], self.corpus)
        mit = next(d for d in detections if d.spdx_id == "MIT")
        self.assertFalse(mit.is_present())
        self.assertGreater(mit.coverage, 0.3)

    def test_present_licenses(self):
        self.assertEqual({"MIT"}, present_licenses(["nothing here", mit_license()], self.corpus))
        self.assertEqual(set(), present_licenses([], self.corpus))

    def test_empty_corpus(self):
        with self.assertRaises(ValueError):
            TemplateCorpus([])


class TestLicenseReferences(unittest.TestCase):
    def test_names_and_aliases(self):
        files = [
            retrieved("README.md", "Weights are released under the Apache License 2.0."),
            retrieved("NOTICE", "Parts of this work are MIT licensed."),
            retrieved("LICENSE.txt", "Permission is granted."),
        ]
        refs = {(r.label, r.file_path) for r in find_license_references(files, ["mit", "apache-2.0"])}
        self.assertEqual({("apache-2.0", "README.md"), ("mit", "NOTICE")}, refs)


class TestCopyrightExtraction(unittest.TestCase):
    def one(self, line):
        notices = extract_copyrights(line)
        self.assertEqual(1, len(notices), line)
        return notices[0]

    def test_accepted_statements(self):
        n = self.one("Copyright (c) 2020 Jane Doe")
        self.assertEqual(("Jane Doe", (2020,)), (n.holder, n.years))
        n = self.one("# Copyright 2018-2021 The Authors. All rights reserved.")
        self.assertEqual(("The Authors", (2018, 2021)), (n.holder, n.years))
        n = self.one("© Acme Inc.")
        self.assertEqual(("Acme Inc.", ()), (n.holder, n.years))
        n = self.one("Copyright: 2020")
        self.assertEqual(("", (2020,)), (n.holder, n.years))
        n = self.one("Copyright 2019, 2021 to present Foo Labs")
        self.assertEqual(("Foo Labs", (2019, 2021)), (n.holder, n.years))
        n = self.one(" * Portions copyright (c) 2015 Bar Corp */")
        self.assertEqual(("Bar Corp", (2015,)), (n.holder, n.years))
        self.assertEqual("copyright (c) 2015 Bar Corp */", n.raw_text)
        n = self.one("Copyright (C) by the Foo Project")
        self.assertEqual(("the Foo Project", ()), (n.holder, n.years))
        n = self.one("Portions Copyright Acme Corp")
        self.assertEqual(("Acme Corp", "Copyright Acme Corp"), (n.holder, n.raw_text))
        n = self.one("(c) Acme Inc.")
        self.assertEqual(("Acme Inc.", ()), (n.holder, n.years))
        n = self.one("Copyright (c) 2019-2021, Acme Corp.")
        self.assertEqual(("Acme Corp.", (2019, 2021)), (n.holder, n.years))

    def test_rejected_statements(self):
        for line in [
            "(c) option three",
            "Redistributions must retain the above copyright notice, this",
            "Copyright notice",
            "COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM",
            "Copyright (c) <year> <copyright holders>",
            "Copyright [yyyy] [name of copyright owner]",
            "copyright",
            "(c) under Patent Claims infringed by Covered Software",
            "(c) You must retain, in the Source form of any Derivative Works",
            "those terms are subject to copyright.  Those of its",
            "under copyright law",
        ]:
            self.assertEqual([], extract_copyrights(line), line)

    def test_templates_yield_no_notices(self):
        for name in ["MIT", "BSD-3-Clause", "BSD-2-Clause", "Apache-2.0", "MPL-2.0"]:
            self.assertEqual([], extract_copyrights(template_text(name)), name)

    def test_location_is_recorded(self):
        notices = extract_copyrights("line one\nCopyright 2021 Org\n", "LICENSE", FileClass.ROOT_LICENSE)
        self.assertEqual([("LICENSE", FileClass.ROOT_LICENSE)], [(n.file_path, n.location_class) for n in notices])


class TestLabels(unittest.TestCase):
    def test_normalize(self):
        self.assertEqual("apache-2.0", normalize_label("Apache 2.0"))
        self.assertEqual("bsd-3-clause", normalize_label("BSD_3"))
        self.assertEqual("mit", normalize_label(" MIT "))
        self.assertEqual("", normalize_label(None))

    def test_categories(self):
        expected = {
            "mit": LicenseCategory.PERMISSIVE,
            "cc-by-4.0": LicenseCategory.PERMISSIVE,
            "cc-by-nc-4.0": LicenseCategory.CC_RESTRICTIVE,
            "cc-by-sa-4.0": LicenseCategory.SHARE_ALIKE,
            "gplv3": LicenseCategory.COPYLEFT,
            "agpl-3.0": LicenseCategory.COPYLEFT,
            "lgpl-3.0": LicenseCategory.SHARE_ALIKE,
            "cc0-1.0": LicenseCategory.PUBLIC_DOMAIN,
            "llama2": LicenseCategory.ML_LICENSE,
            "creativeml-openrail-m": LicenseCategory.ML_LICENSE,
            "other": LicenseCategory.UNKNOWN,
            None: LicenseCategory.UNKNOWN,
        }
        for label, category in expected.items():
            self.assertEqual(category, categorize_license(label), label)

    def test_permissive_labels(self):
        self.assertTrue(is_permissive_label("MIT"))
        self.assertTrue(is_permissive_label("apache2"))
        self.assertFalse(is_permissive_label("bsd-2-clause"))
        self.assertFalse(is_permissive_label(None))
        self.assertTrue(is_permissive_label("bsd-2-clause", ["bsd-2-clause"]))

    def test_card_license(self):
        self.assertEqual("mit", card_license("---\nlicense: mit\n---\n# Model\n"))
        self.assertEqual("apache-2.0", card_license("---\nlicense:\n- apache-2.0\n- mit\n---\n"))
        self.assertIsNone(card_license("# Model\nlicense: mit\n"))


if __name__ == "__main__":
    unittest.main()
