"""
Selection and retrieval of compliance-relevant repository files.

Paths are classified with case-insensitive filename/directory patterns into
license-class files (at the repository root, under a legal directory, or
scattered elsewhere) and READMEs. Only classified files under the size cap
are fetched.
"""
import json
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set

from chain_audit.errors import RetriableFetchError

logger = logging.getLogger(__name__)

LICENSE_KEYWORDS = [
    'license', 'licence', 'copying', 'unlicense', 'patents', 'notice', 'copyright',
    'disclaimer', 'authors', 'legal', 'terms', 'attribution', 'citation',
    'model_license', 'data_license', 'dataset_license', 'modelcard', 'model_card', 'datasheet',
]
LICENSE_DIRECTORIES = ['legal', 'license', 'licenses', 'licensing', 'copyright', 'terms', 'attribution']
README_PATTERNS = ['readme', 'read_me', 'read-me']


def license_regex(keywords: Sequence[str]) -> str:
    return r"^(.*\/)?([a-z0-9._-]+\.)?(" + "|".join(map(re.escape, keywords)) + r")(\.[a-z0-9\._-]+)?$"


def readme_regex(patterns: Sequence[str]) -> str:
    return r"^(.*\/)?(" + "|".join(map(re.escape, patterns)) + r")(\..*)?$"


LICENSE_REGEX = license_regex(LICENSE_KEYWORDS)
README_REGEX = readme_regex(README_PATTERNS)

MAX_FILE_BYTES = 300 * 2**20


class FileClass(str, Enum):
    ROOT_LICENSE = "root_license"
    DIRECTORY_LICENSE = "directory_license"
    SCATTERED_LICENSE = "scattered_license"
    README = "readme"
    NONE = "none"

    @property
    def is_license(self) -> bool:
        return self in (FileClass.ROOT_LICENSE, FileClass.DIRECTORY_LICENSE, FileClass.SCATTERED_LICENSE)


class RetrievalPatterns:
    """Compiled classification patterns; the keyword lists can be replaced from config."""

    def __init__(self, license_keywords: Optional[Sequence[str]] = None,
                 license_directories: Optional[Sequence[str]] = None,
                 readme_patterns: Optional[Sequence[str]] = None):
        keywords = list(license_keywords or LICENSE_KEYWORDS)
        readmes = list(readme_patterns or README_PATTERNS)
        self.license_directories = {d.lower() for d in (license_directories or LICENSE_DIRECTORIES)}
        self.license_re = re.compile(license_regex(keywords), re.IGNORECASE)
        self.readme_re = re.compile(readme_regex(readmes), re.IGNORECASE)

    def classify(self, path: str) -> FileClass:
        path = path.replace("\\", "/")
        while path.startswith("./"):
            path = path[2:]
        path = path.strip("/")
        parts = path.split("/")
        if any(d.lower() in self.license_directories for d in parts[:-1]):
            return FileClass.DIRECTORY_LICENSE
        if self.license_re.match(path):
            return FileClass.ROOT_LICENSE if len(parts) == 1 else FileClass.SCATTERED_LICENSE
        if self.readme_re.match(path):
            return FileClass.README
        return FileClass.NONE


DEFAULT_PATTERNS = RetrievalPatterns()


def classify_path(path: str, patterns: RetrievalPatterns = DEFAULT_PATTERNS) -> FileClass:
    return patterns.classify(path)


@dataclass(frozen=True)
class TreeEntry:
    path: str
    size_bytes: Optional[int] = None


@dataclass
class RetrievalPlan:
    paths: List[str] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)
    duplicates: Dict[str, List[str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"paths": self.paths, "skipped": self.skipped, "duplicates": self.duplicates}


def select_files(tree: Iterable[TreeEntry], max_bytes: int = MAX_FILE_BYTES,
                 patterns: RetrievalPatterns = DEFAULT_PATTERNS) -> RetrievalPlan:
    """
    Build a retrieval plan from a tree listing.

    Classified paths larger than ``max_bytes`` go to the skip report instead.
    Paths with unknown size are planned and checked again when fetched.
    Basenames that occur in several directories are reported as duplicates;
    every occurrence is still planned.
    """
    plan = RetrievalPlan()
    by_basename: Dict[str, List[str]] = {}
    for entry in sorted(tree, key=lambda e: e.path):
        if classify_path(entry.path, patterns) == FileClass.NONE:
            continue
        if entry.size_bytes is not None and entry.size_bytes > max_bytes:
            plan.skipped.append({"path": entry.path, "size_bytes": entry.size_bytes, "reason": "oversize"})
            continue
        plan.paths.append(entry.path)
        by_basename.setdefault(entry.path.rsplit("/", 1)[-1].lower(), []).append(entry.path)
    plan.duplicates = {name: paths for name, paths in sorted(by_basename.items()) if len(paths) > 1}
    return plan


@dataclass(frozen=True)
class RetrievedFile:
    artifact_id: str
    path: str
    file_class: FileClass
    size_bytes: int
    content: str
    sha256: Optional[str] = None

    def __post_init__(self):
        if self.file_class == FileClass.NONE:
            raise ValueError(f"{self.artifact_id}:{self.path} is not a compliance-relevant file")
        if self.size_bytes < 0:
            raise ValueError("size_bytes must be non-negative")


@dataclass
class FetchResult:
    artifact_id: str
    files: List[RetrievedFile] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)

    @property
    def unretrievable(self) -> bool:
        """Every planned path failed."""
        return bool(self.failures) and not self.files


def fetch_files(artifact_id: str, plan: RetrievalPlan, client: Callable[[str], bytes], cache=None,
                max_bytes: int = MAX_FILE_BYTES,
                patterns: RetrievalPatterns = DEFAULT_PATTERNS) -> FetchResult:
    """
    Fetch every planned path through ``client``.

    Per-path failures (the client raising, or a file over the size cap) are
    recorded and do not stop the artifact. Contents are stored in ``cache``
    keyed by (artifact_id, path) and content hash when a cache is given.
    Quota and auth errors from the client propagate.
    """
    result = FetchResult(artifact_id=artifact_id)
    for path in plan.paths:
        try:
            data = client(path)
        except RetriableFetchError:
            raise
        except Exception as e:
            logger.warning(f"[Fetch] {artifact_id}:{path} failed: {e}")
            result.failures.append({"path": path, "error": str(e) or type(e).__name__})
            continue
        if len(data) > max_bytes:
            result.failures.append({"path": path, "error": f"oversize ({len(data)} bytes)"})
            continue
        digest = cache.put(artifact_id, path, data) if cache is not None else None
        result.files.append(RetrievedFile(
            artifact_id=artifact_id,
            path=path,
            file_class=classify_path(path, patterns),
            size_bytes=len(data),
            content=data.decode("utf-8", errors="replace"),
            sha256=digest,
        ))
    return result


class CoverageCategory(str, Enum):
    PERFECT_MATCH = "perfect_match"
    PARTIAL_MATCH = "partial_match"
    COMPLETE_MISS = "complete_miss"


@dataclass(frozen=True)
class CoverageVerdict:
    category: CoverageCategory
    pattern_licenses: frozenset
    full_scan_licenses: frozenset


def validate_retrieval_coverage(pattern_detections: Set[str], full_scan_detections: Set[str]) -> CoverageVerdict:
    """
    Compare licenses found in pattern-retrieved files with those found by a
    full-tree scan. A full scan that finds nothing counts as a perfect match.
    """
    pattern = frozenset(pattern_detections)
    full = frozenset(full_scan_detections)
    if full <= pattern:
        category = CoverageCategory.PERFECT_MATCH
    elif full & pattern:
        category = CoverageCategory.PARTIAL_MATCH
    else:
        category = CoverageCategory.COMPLETE_MISS
    return CoverageVerdict(category, pattern, full)


def coverage_summary(verdicts_by_kind: Dict[str, List[CoverageVerdict]]) -> List[dict]:
    """Perfect / Partial / Any Match / Complete Miss / Total per kind plus a Combined column."""
    counts = {}
    combined = Counter()
    for kind in sorted(verdicts_by_kind):
        c = Counter(v.category for v in verdicts_by_kind[kind])
        counts[kind] = c
        combined.update(c)
    counts["Combined"] = combined

    def row(label, fn):
        out = {"category": label}
        for kind, c in counts.items():
            out[kind] = fn(c)
        return out

    return [
        row("Perfect Match", lambda c: c[CoverageCategory.PERFECT_MATCH]),
        row("Partial Match", lambda c: c[CoverageCategory.PARTIAL_MATCH]),
        row("Any Match", lambda c: c[CoverageCategory.PERFECT_MATCH] + c[CoverageCategory.PARTIAL_MATCH]),
        row("Complete Miss", lambda c: c[CoverageCategory.COMPLETE_MISS]),
        row("Total", lambda c: sum(c.values())),
    ]


NO_EXTENSION = "No Extension"


def file_extension_histogram(paths: Iterable[str], top_n: Optional[int] = None) -> List[dict]:
    """
    Rank file extensions by count, case-insensitively.

    Rows carry the extension, its count, its share of all files and, for
    comparison, its count relative to the number of ``.py`` files.
    """
    counts = Counter()
    for path in paths:
        ext = os.path.splitext(path.replace("\\", "/").rsplit("/", 1)[-1])[1].lower()
        counts[ext or NO_EXTENSION] += 1
    total = sum(counts.values())
    py = counts.get(".py", 0)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_n is not None:
        ranked = ranked[:top_n]
    return [
        {
            "extension": ext,
            "count": n,
            "percent": 100.0 * n / total,
            "percent_of_py": 100.0 * n / py if py else None,
        }
        for ext, n in ranked
    ]


def load_tree_listing(path) -> Dict[str, List[TreeEntry]]:
    """
    Read a line-delimited JSON tree listing.

    Each line is ``{"id": ..., "path": ..., "size_bytes": ...}``; lines without
    an id belong to the artifact named ``""``.
    """
    trees: Dict[str, List[TreeEntry]] = {}
    with open(Path(path), "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            size = obj.get("size_bytes")
            trees.setdefault(obj.get("id", ""), []).append(
                TreeEntry(obj["path"], int(size) if size is not None else None)
            )
    return trees
