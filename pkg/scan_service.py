import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

from tqdm import tqdm

from chain_audit.audit import ArtifactScan, scan_artifact
from chain_audit.cache import ContentCache
from chain_audit.errors import RetriableFetchError
from chain_audit.graph import ArtifactKind, SupplyChainGraph
from chain_audit.license_engine import LabelTables, TemplateCorpus
from chain_audit.retrieval import (
    DEFAULT_PATTERNS,
    MAX_FILE_BYTES,
    FileClass,
    RetrievalPatterns,
    RetrievalPlan,
    RetrievedFile,
    fetch_files,
    select_files,
)

logger = logging.getLogger(__name__)


def cache_key(kind: str, artifact_id: str) -> str:
    return f"{kind}:{artifact_id}"


def _write_jsonl(rows: List[dict], path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


class FetchService:
    """
    Stage 2a: retrieve the compliance files of every graph artifact into the content cache.

    ``client`` is anything with ``tree(kind, id)`` and ``read(kind, id, path)``:
    a LocalRepositoryClient over fixture repositories, or a live hub/forge client.
    """

    def __init__(self, client, cache: ContentCache, max_bytes: int = MAX_FILE_BYTES,
                 patterns: RetrievalPatterns = DEFAULT_PATTERNS, workers: int = 8, progress: bool = True):
        self.client = client
        self.cache = cache
        self.max_bytes = max_bytes
        self.patterns = patterns
        self.workers = workers
        self.progress = progress

    def fetch_one(self, kind: str, artifact_id: str) -> dict:
        key = cache_key(kind, artifact_id)
        try:
            tree = self.client.tree(kind, artifact_id)
        except RetriableFetchError:
            raise
        except Exception as e:
            logger.warning(f"[Fetch] No repository tree for {kind} {artifact_id}: {e}")
            self.cache.mark_artifact(key)
            return {
                "kind": kind, "id": artifact_id, "plan": [], "skipped": [], "duplicates": {}, "files": [],
                "failures": [{"path": None, "error": str(e) or type(e).__name__}], "unretrievable": True,
            }

        plan: RetrievalPlan = select_files(tree, self.max_bytes, self.patterns)

        def read(path):
            cached = self.cache.get(key, path)
            return cached if cached is not None else self.client.read(kind, artifact_id, path)

        result = fetch_files(key, plan, read, cache=self.cache, max_bytes=self.max_bytes, patterns=self.patterns)
        self.cache.mark_artifact(key)
        if plan.skipped:
            logger.info(f"[Fetch] {kind} {artifact_id}: {len(plan.skipped)} oversize files skipped")
        return {
            "kind": kind,
            "id": artifact_id,
            "plan": plan.paths,
            "skipped": plan.skipped,
            "duplicates": plan.duplicates,
            "files": [
                {"path": f.path, "file_class": f.file_class.value, "size_bytes": f.size_bytes, "sha256": f.sha256}
                for f in result.files
            ],
            "failures": result.failures,
            "unretrievable": result.unretrievable,
        }

    def run(self, graph: SupplyChainGraph, out_path) -> List[dict]:
        out_path = Path(out_path)
        targets = sorted(r.key for r in graph.artifacts())
        logger.info(f"[Fetch] Retrieving compliance files for {len(targets)} artifacts with {self.workers} workers")
        try:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                rows = list(tqdm(
                    pool.map(lambda key: self.fetch_one(*key), targets),
                    total=len(targets), desc="fetch", disable=not self.progress,
                ))
        finally:
            self.cache.flush()

        _write_jsonl(rows, out_path)
        n_files = sum(len(r["files"]) for r in rows)
        n_unretrievable = sum(r["unretrievable"] for r in rows)
        logger.info(f"[Fetch] {n_files} files retrieved, {n_unretrievable} artifacts unretrievable → {out_path}")
        return rows


def read_fetch_report(path) -> Dict[tuple, dict]:
    rows = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                rows[(row["kind"], row["id"])] = row
    return rows


def read_scans(path) -> Dict[tuple, ArtifactScan]:
    scans = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                scan = ArtifactScan.from_json(json.loads(line))
                scans[scan.key] = scan
    return scans


class ScanService:
    """Stage 2b: license-text, reference and copyright detection over cached files."""

    def __init__(self, cache: ContentCache, corpus: TemplateCorpus, noise_floor: float = 0.05,
                 tables: Optional[LabelTables] = None, progress: bool = True):
        self.cache = cache
        self.corpus = corpus
        self.noise_floor = noise_floor
        self.tables = tables
        self.progress = progress

    def load_files(self, row: dict) -> List[RetrievedFile]:
        files = []
        for entry in row["files"]:
            data = self.cache.read_blob(entry["sha256"])
            if data is None:
                logger.warning(f"[Scan] Blob for {row['id']}:{entry['path']} missing from cache, skipping")
                continue
            files.append(RetrievedFile(
                artifact_id=row["id"],
                path=entry["path"],
                file_class=FileClass(entry["file_class"]),
                size_bytes=entry["size_bytes"],
                content=data.decode("utf-8", errors="replace"),
                sha256=entry["sha256"],
            ))
        return files

    def run(self, graph: SupplyChainGraph, fetch_rows: Dict[tuple, dict], out_path) -> Dict[tuple, ArtifactScan]:
        out_path = Path(out_path)
        scans = {}
        for key in tqdm(sorted(r.key for r in graph.artifacts()), desc="scan", disable=not self.progress):
            row = fetch_rows.get(key)
            if row is None:
                logger.warning(f"[Scan] {key[0]} {key[1]} has no fetch record, scanning as unretrievable")
                row = {"id": key[1], "files": [], "unretrievable": True}
            files = self.load_files(row)
            scans[key] = scan_artifact(
                ArtifactKind(key[0]), key[1], files, self.corpus,
                unretrievable=bool(row.get("unretrievable")) or (bool(row["files"]) and not files),
                noise_floor=self.noise_floor, tables=self.tables,
            )

        _write_jsonl([scans[k].to_json() for k in sorted(scans)], out_path)
        logger.info(
            f"[Scan] {sum(len(s.detections) for s in scans.values())} license detections, "
            f"{sum(len(s.notices) for s in scans.values())} copyright notices → {out_path}"
        )
        return scans
