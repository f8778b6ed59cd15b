"""
License text detection, copyright notice extraction and label categorization.

A license is detected in a document by order-preserving token coverage: the
length of the longest common subsequence between the document's tokens and
a template's tokens, divided by the template length. Text at or above the
present-level threshold (0.90 by default) counts as the full license text.
"""
import fnmatch
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from huggingface_hub import RepoCard

from chain_audit.config import DEFAULT_ALIAS_FILE, DEFAULT_CATEGORY_FILE
from chain_audit.retrieval import FileClass, RetrievedFile

logger = logging.getLogger(__name__)

NOISE_FLOOR = 0.05
PRESENT_THRESHOLD = 0.90
DEFAULT_PERMISSIVE = ("mit", "apache-2.0", "bsd-3-clause")

TOKEN_RE = re.compile(r"[^\W_]+")
PLACEHOLDER_RE = re.compile(r"<[^<>\n]*>|\[[^\[\]\n]*\]")
APPENDIX_RE = re.compile(r"^\s*(?:APPENDIX:\s*)?How to apply (?:the Apache License|these terms)",
                         re.IGNORECASE | re.MULTILINE)


def tokenize(text: str) -> List[str]:
    return TOKEN_RE.findall(text.lower())


def strip_placeholders(text: str) -> str:
    """Drop ``<year>``/``[name of copyright owner]`` style fields and any how-to-apply appendix."""
    m = APPENDIX_RE.search(text)
    if m:
        text = text[:m.start()]
    return PLACEHOLDER_RE.sub(" ", text)


@dataclass(frozen=True)
class LicenseTemplate:
    spdx_id: str
    canonical_text: str
    tokens: Tuple[str, ...]

    @classmethod
    def from_text(cls, spdx_id: str, text: str) -> "LicenseTemplate":
        tokens = tuple(tokenize(strip_placeholders(text)))
        if not tokens:
            raise ValueError(f"License template {spdx_id} has no tokens")
        return cls(spdx_id, text, tokens)

    @property
    def label(self) -> str:
        return self.spdx_id.lower()


class TemplateCorpus:
    """Immutable set of templates with their precomputed match bitmasks."""

    def __init__(self, templates: Iterable[LicenseTemplate]):
        self.templates = sorted(templates, key=lambda t: t.spdx_id)
        if not self.templates:
            raise ValueError("License template corpus is empty")
        self._masks = {t.spdx_id: _token_masks(t.tokens) for t in self.templates}
        self._by_label = {t.label: t for t in self.templates}

    def __iter__(self):
        return iter(self.templates)

    def __len__(self):
        return len(self.templates)

    def for_label(self, label: Optional[str]) -> Optional[LicenseTemplate]:
        if not label:
            return None
        return self._by_label.get(label.lower())

    def coverage(self, doc_tokens: Sequence[str], template: LicenseTemplate) -> float:
        return _coverage(doc_tokens, template, self._masks[template.spdx_id])


def load_templates(template_dir) -> TemplateCorpus:
    """Read ``<spdx_id>.txt`` files from a directory."""
    template_dir = Path(template_dir)
    templates = []
    for path in sorted(template_dir.glob("*.txt")):
        templates.append(LicenseTemplate.from_text(path.stem, path.read_text(encoding="utf-8")))
    logger.debug(f"Loaded {len(templates)} license templates from {template_dir}")
    return TemplateCorpus(templates)


def _token_masks(tokens: Sequence[str]) -> Dict[str, int]:
    masks: Dict[str, int] = {}
    for i, tok in enumerate(tokens):
        masks[tok] = masks.get(tok, 0) | (1 << i)
    return masks


def lcs_length(doc_tokens: Sequence[str], template_tokens: Sequence[str],
               masks: Optional[Dict[str, int]] = None) -> int:
    """Bit-parallel LCS length; one big-int step per document token."""
    m = len(template_tokens)
    if m == 0 or not doc_tokens:
        return 0
    masks = masks if masks is not None else _token_masks(template_tokens)
    full = (1 << m) - 1
    v = full
    for tok in doc_tokens:
        match = masks.get(tok)
        if match is None:
            continue
        u = v & match
        v = ((v + u) | (v - u)) & full
    return m - bin(v).count("1")


def _coverage(doc_tokens, template, masks) -> float:
    if not doc_tokens:
        return 0.0
    return lcs_length(doc_tokens, template.tokens, masks) / len(template.tokens)


def match_license(doc_tokens: Sequence[str], template: LicenseTemplate) -> float:
    return _coverage(doc_tokens, template, None)


@dataclass(frozen=True)
class LicenseDetection:
    artifact_id: str
    spdx_id: str
    coverage: float
    file_path: str
    location_class: FileClass

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage out of range: {self.coverage}")

    def is_present(self, threshold: float = PRESENT_THRESHOLD) -> bool:
        return self.coverage >= threshold


def detect_licenses(files: Iterable[RetrievedFile], corpus: TemplateCorpus,
                    noise_floor: float = NOISE_FLOOR) -> List[LicenseDetection]:
    """Coverage of every template in every file, keeping those above the noise floor."""
    detections = []
    for f in sorted(files, key=lambda f: (f.artifact_id, f.path)):
        tokens = tokenize(f.content)
        if not tokens:
            continue
        for template in corpus:
            coverage = corpus.coverage(tokens, template)
            if coverage > noise_floor:
                detections.append(LicenseDetection(f.artifact_id, template.spdx_id, coverage, f.path, f.file_class))
    return detections


def present_licenses(texts: Iterable[str], corpus: TemplateCorpus, threshold: float = PRESENT_THRESHOLD) -> Set[str]:
    """Spdx ids reaching ``threshold`` in any of ``texts``, whatever file they came from."""
    found = set()
    for text in texts:
        tokens = tokenize(text)
        if not tokens:
            continue
        found.update(t.spdx_id for t in corpus if t.spdx_id not in found and corpus.coverage(tokens, t) >= threshold)
    return found


@dataclass(frozen=True)
class LicenseReference:
    """An explicit mention of a license name, id or alias in a file."""

    artifact_id: str
    label: str
    file_path: str
    location_class: FileClass


def _contains_run(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    first = needle[0]
    for i, tok in enumerate(haystack[:len(haystack) - n + 1]):
        if tok == first and tuple(haystack[i:i + n]) == tuple(needle):
            return True
    return False


def find_license_references(files: Iterable[RetrievedFile], labels: Iterable[str],
                            tables: Optional["LabelTables"] = None) -> List[LicenseReference]:
    """
    Find contiguous token matches of each label, or any alias of it, per file.

    Args:
        files: retrieved files to search.
        labels: canonical labels to look for (e.g. ``["mit", "apache-2.0"]``).
        tables: alias table; the shipped one by default.
    """
    tables = tables or default_tables()
    phrases: Dict[str, List[Tuple[str, ...]]] = {}
    for label in sorted(set(labels)):
        variants = {label} | {alias for alias, target in tables.aliases.items() if target == label}
        seqs = {tuple(tokenize(v)) for v in variants}
        phrases[label] = sorted(s for s in seqs if s)

    refs = []
    for f in sorted(files, key=lambda f: (f.artifact_id, f.path)):
        tokens = tokenize(f.content)
        for label, seqs in phrases.items():
            if any(_contains_run(tokens, s) for s in seqs):
                refs.append(LicenseReference(f.artifact_id, label, f.path, f.file_class))
    return refs


@dataclass(frozen=True)
class CopyrightNotice:
    raw_text: str
    holder: str
    years: Tuple[int, ...]
    file_path: Optional[str] = None
    location_class: Optional[FileClass] = None


MARKER_RUN_RE = re.compile(r"(?:(?:copyright\b|\(c\)|©)\s*)+", re.IGNORECASE)
YEAR = r"(?:19|20)\d{2}(?!\d)"
YEARS_RE = re.compile(rf"\s*{YEAR}(?:\s*(?:[-–,/]|to)\s*(?:{YEAR}|present))*", re.IGNORECASE)
YEAR_VALUE_RE = re.compile(YEAR)
COMMENT_LEAD_RE = re.compile(r"^[\s#/*;!%>|\"'-]*")
COMMENT_TAIL_RE = re.compile(r"\s*(?:\*/|-->|#}|\"\"\"|''')\s*$")
RIGHTS_RESERVED_RE = re.compile(r"[\s.,;]*all rights reserved\.?$", re.IGNORECASE)

HOLDER_STOP_WORDS = {
    "notice", "notices", "holder", "holders", "owner", "owners", "ownership", "and", "or", "and/or",
    "law", "laws", "doctrines", "treaty", "license", "licensed", "licenses", "statement", "statements",
    "protection", "of", "on", "to", "in", "is", "are", "for", "if", "including", "may", "shall",
    "patent", "patents", "trademark", "trademarks", "like", "permission", "disclaimer", "as", "rights",
    "similar", "infringement", "interest", "status", "claims", "with", "information", "file", "files",
    "etc", "symbol", "sign", "line", "lines", "header", "headers", "also", "then", "those", "more",
    "you", "your",
}
LEADING_BY_RE = re.compile(r"^by\s+", re.IGNORECASE)


def _is_placeholder(holder: str) -> bool:
    return bool(PLACEHOLDER_RE.search(holder)) and not TOKEN_RE.search(PLACEHOLDER_RE.sub(" ", holder))


def _parse_statement(content: str, run: re.Match) -> Optional[Tuple[str, str, Tuple[int, ...]]]:
    marker = run.group(0).lower()
    rest = content[run.end():].lstrip(" \t:")
    years: Tuple[int, ...] = ()
    y = YEARS_RE.match(rest)
    if y:
        years = tuple(int(v) for v in YEAR_VALUE_RE.findall(y.group(0)))
        rest = rest[y.end():]

    holder = COMMENT_TAIL_RE.sub("", rest)
    holder = RIGHTS_RESERVED_RE.sub("", holder.strip())
    holder = holder.strip(" \t,;:-–").strip()
    holder = LEADING_BY_RE.sub("", holder)
    first = TOKEN_RE.search(holder)
    if first is None:
        holder = ""

    if not holder and not years:
        return None
    if holder and _is_placeholder(holder):
        return None
    if not years:
        if first.group(0).lower() in HOLDER_STOP_WORDS:
            return None
        bare_c = "copyright" not in marker and "©" not in marker
        # "(c)" alone starts enumeration items: "(c) under Patent Claims", "(c) You must retain"
        if bare_c and (run.start() > 0 or not holder[0].isupper()):
            return None
    raw = content[run.start():].strip()
    return raw, holder, years


def extract_copyrights(text: str, file_path: Optional[str] = None,
                       location_class: Optional[FileClass] = None) -> List[CopyrightNotice]:
    """
    Extract copyright statements line by line.

    A statement is a marker ("copyright", "(c)" or "©", possibly repeated),
    an optional list of years or year ranges, and the rest of the line as the
    rights holder. Boilerplate mentions ("copyright notice", "copyright holders
    and contributors") and unfilled template fields are rejected.
    """
    notices = []
    for line in text.splitlines():
        content = COMMENT_LEAD_RE.sub("", line).rstrip()
        if not content:
            continue
        for run in MARKER_RUN_RE.finditer(content):
            parsed = _parse_statement(content, run)
            if parsed:
                raw, holder, years = parsed
                notices.append(CopyrightNotice(raw, holder, years, file_path, location_class))
                break
    return notices


def notices_in_files(files: Iterable[RetrievedFile]) -> List[CopyrightNotice]:
    notices = []
    for f in sorted(files, key=lambda f: (f.artifact_id, f.path)):
        notices.extend(extract_copyrights(f.content, f.path, f.file_class))
    return notices


class LicenseCategory(str, Enum):
    CC_RESTRICTIVE = "cc_restrictive"
    COPYLEFT = "copyleft"
    ML_LICENSE = "ml_license"
    SHARE_ALIKE = "share_alike"
    PERMISSIVE = "permissive"
    PUBLIC_DOMAIN = "public_domain"
    UNKNOWN = "unknown"


def _read_table(path) -> List[Tuple[str, str]]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected '<key> <value>', got {line!r}")
            rows.append((parts[0].lower(), parts[1].lower()))
    return rows


class LabelTables:
    """Alias and category tables used to normalize and categorize license labels."""

    def __init__(self, alias_file=DEFAULT_ALIAS_FILE, category_file=DEFAULT_CATEGORY_FILE):
        self.aliases: Dict[str, str] = dict(_read_table(alias_file))
        self.categories: List[Tuple[str, LicenseCategory]] = [
            (pattern, LicenseCategory(value)) for pattern, value in _read_table(category_file)
        ]

    def normalize(self, label: Optional[str]) -> str:
        if not label:
            return ""
        key = re.sub(r"[\s_]+", "-", label.strip().lower())
        return self.aliases.get(key, key)

    def categorize(self, label: Optional[str]) -> LicenseCategory:
        key = self.normalize(label)
        if not key:
            return LicenseCategory.UNKNOWN
        for pattern, category in self.categories:
            if pattern == key:
                return category
        for pattern, category in self.categories:
            if fnmatch.fnmatchcase(key, pattern):
                return category
        return LicenseCategory.UNKNOWN


@lru_cache(maxsize=1)
def default_tables() -> LabelTables:
    return LabelTables()


def normalize_label(label: Optional[str], tables: Optional[LabelTables] = None) -> str:
    return (tables or default_tables()).normalize(label)


def categorize_license(label: Optional[str], tables: Optional[LabelTables] = None) -> LicenseCategory:
    return (tables or default_tables()).categorize(label)


def is_permissive_label(label: Optional[str], permissive: Iterable[str] = DEFAULT_PERMISSIVE,
                        tables: Optional[LabelTables] = None) -> bool:
    tables = tables or default_tables()
    return tables.normalize(label) in {tables.normalize(p) for p in permissive}


def card_license(readme_text: str) -> Optional[str]:
    """``license`` field of a README's YAML front matter, if any."""
    if not readme_text.lstrip().startswith("---"):
        return None
    try:
        card = RepoCard(readme_text, ignore_metadata_errors=True)
    except ValueError as e:
        logger.debug(f"Unparseable card metadata: {e}")
        return None
    value = card.data.to_dict().get("license")
    if isinstance(value, list):
        value = value[0] if value else None
    return str(value).strip().lower() if value else None
