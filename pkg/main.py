import argparse
import contextlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from chain_audit import __version__
from chain_audit.cache import ContentCache, ResolverCache
from chain_audit.clients import ForgeClient, HubClient, KindRouter, LocalRepositoryClient, fetch_live
from chain_audit.config import PipelineConfig, load_config
from chain_audit.errors import (
    ChainAuditError,
    ConfigError,
    RetriableFetchError,
    StageDependencyError,
    StageError,
)
from chain_audit.graph import ArtifactKind, read_graph
from chain_audit.license_engine import LabelTables, load_templates, present_licenses
from chain_audit.reports import sha256_file, write_json, write_table
from chain_audit.retrieval import (
    RetrievalPatterns,
    coverage_summary,
    file_extension_histogram,
    load_tree_listing,
    select_files,
    validate_retrieval_coverage,
)
from audit_service import AuditService, ReportService
from ingest_service import IngestService
from scan_service import FetchService, ScanService, read_fetch_report, read_scans

logger = logging.getLogger(__name__)

STAGES = ["ingest", "fetch", "scan", "audit", "report"]
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_RETRY_LATER = 75

GRAPH_FILE = "graph.jsonl"
INGEST_REPORT = "ingest_report.json"
FETCH_FILE = "fetch.jsonl"
SCANS_FILE = "scans.jsonl"
REPORTS_DIR = "reports"
MANIFEST_FILE = "manifest.json"
TIMINGS_FILE = "timings.json"
LOCK_FILE = ".chainaudit.lock"


@dataclass(frozen=True)
class StageFiles:
    """Where each stage reads and writes. Files default to the output directory."""
    graph: Path
    fetch: Path
    scans: Path
    reports: Path

    @classmethod
    def under(cls, out_dir: Path, graph: Optional[Path] = None, scans: Optional[Path] = None) -> "StageFiles":
        out_dir = Path(out_dir)
        return cls(Path(graph or out_dir / GRAPH_FILE), out_dir / FETCH_FILE, Path(scans or out_dir / SCANS_FILE),
                   out_dir / REPORTS_DIR)

    @property
    def ingest_report(self) -> Path:
        return self.graph.parent / INGEST_REPORT

    def inputs(self, stage: str) -> List[Path]:
        return {
            "ingest": [],
            "fetch": [self.graph],
            "scan": [self.graph, self.fetch],
            "audit": [self.graph, self.scans],
            "report": [self.graph, self.scans],
        }[stage]


def parse_arguments(argv=None):
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument('--config', type=Path, help='TOML or JSON config file; flags override its values')
    common.add_argument('--out-dir', dest='output_dir', type=Path, help='Pipeline output directory')
    common.add_argument('--cache-dir', dest='cache_dir', type=Path, help='Content cache directory')
    common.add_argument('--repos-dir', dest='repos_dir', type=Path,
                        help='Local repositories laid out as <kind>s/<org>/<name>/')
    common.add_argument('--workers', type=int, help='Parallel fetch workers')
    common.add_argument('--live', action='store_true', default=None,
                        help='Fetch repository files from the hub and forge instead of --repos-dir')
    common.add_argument('--verbose', action='store_true', help='Debug logging')
    common.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')

    stage_flags = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    stage_flags.add_argument('--graph', dest='graph_file', type=Path,
                             help=f'Supply-chain graph (default: <out-dir>/{GRAPH_FILE})')
    stage_flags.add_argument('--scans', dest='scans_file', type=Path,
                             help=f'Scan results (default: <out-dir>/{SCANS_FILE})')
    stage_flags.add_argument('--snapshot', dest='snapshots', type=Path, action='append',
                             help='Metadata snapshot (JSON lines); repeatable')
    stage_flags.add_argument('--min-likes', dest='min_likes', type=int, help='Minimum model likes')
    stage_flags.add_argument('--min-stars', dest='min_stars', type=int, help='Minimum application stars')
    stage_flags.add_argument('--no-validate-usage', dest='validate_usage', action='store_false', default=None,
                             help='Accept candidate model usages without checking the application source')
    stage_flags.add_argument('--max-file-mb', dest='max_file_mb', type=float, help='Per-file retrieval cap')
    stage_flags.add_argument('--coverage-threshold', dest='coverage_threshold', type=float,
                             help='Template coverage counted as license text')
    stage_flags.add_argument('--top-orgs', dest='top_orgs', type=int, help='Organizations in the org table')

    parser = argparse.ArgumentParser(prog='chainaudit', description='License compliance audit of AI supply chains',
                                     allow_abbrev=False)
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    stage_parsers = {
        stage: sub.add_parser(stage, parents=[common, stage_flags], help=f'Run the {stage} stage', allow_abbrev=False)
        for stage in STAGES
    }
    stage_parsers['ingest'].add_argument('--out', dest='graph_file', type=Path, help='Graph file to write')
    run = sub.add_parser('run', parents=[common, stage_flags], help='Run stages in order', allow_abbrev=False)
    run.add_argument('--stage', choices=STAGES, action='append',
                     help='Run only this stage (repeatable); default is every stage')

    validate = sub.add_parser('validate', parents=[common, stage_flags], allow_abbrev=False,
                              help='Compare pattern retrieval against full-tree license scans')
    validate.add_argument('--sample', type=Path, required=True,
                          help='Lines of "<kind> <id>" naming repositories under --repos-dir')

    histogram = sub.add_parser('histogram', parents=[common], help='File-extension histogram', allow_abbrev=False)
    histogram.add_argument('--tree-listing', type=Path, help='JSON lines of {"id", "path", "size_bytes"}')
    histogram.add_argument('--top-n', type=int, default=15, help='Rows to keep')

    live = sub.add_parser('fetch-live', parents=[common], help='Fetch snapshot records from the hub or forge',
                          allow_abbrev=False)
    live.add_argument('--platform', choices=['hub', 'forge'], required=True)
    live.add_argument('--kind', choices=[k.value for k in ArtifactKind], required=True)
    live.add_argument('--ids', type=Path, required=True, help='One artifact id per line')
    live.add_argument('--discover', action='store_true',
                      help='Treat --ids as model ids and search the forge for applications using them')
    live.add_argument('--out', type=Path, required=True, help='Snapshot fragment to write')
    live.add_argument('--hits-out', type=Path,
                      help='With --discover, write every code search hit as a tree listing for `histogram`')
    return parser.parse_args(argv)


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def build_config(args, require_inputs=True) -> PipelineConfig:
    keys = ["output_dir", "cache_dir", "repos_dir", "workers", "live", "snapshots", "min_likes", "min_stars",
            "validate_usage", "max_file_mb", "coverage_threshold", "top_orgs"]
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    config = load_config(args.config, overrides)
    return config.validate(require_inputs=require_inputs)


@contextlib.contextmanager
def output_lock(out_dir: Path):
    """Exclusive ownership of the output directory for one pipeline run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ChainAuditError(f"{out_dir} is in use by another run (remove {lock} if that run is gone)")
    with os.fdopen(fd, "w") as f:
        f.write(str(os.getpid()))
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def resolver_cache(config: PipelineConfig) -> ResolverCache:
    return ResolverCache(config.resolver_cache or config.cache_dir / "resolver.json")


def repository_client(config: PipelineConfig):
    if config.live:
        hub = HubClient(config.hub_endpoint, config.hub_token, config.rate_limit, config.max_retries)
        forge = ForgeClient(config.forge_endpoint, config.forge_token, config.rate_limit, config.max_retries)
        return KindRouter(hub, forge)
    if config.repos_dir is None:
        raise ConfigError("fetch needs --repos-dir (or --live)")
    return LocalRepositoryClient(config.repos_dir)


def retrieval_patterns(config: PipelineConfig) -> RetrievalPatterns:
    return RetrievalPatterns(config.license_keywords, config.license_directories, config.readme_patterns)


def run_stage(stage: str, config: PipelineConfig, progress: bool, files: StageFiles):
    tables = LabelTables(config.alias_file, config.category_file)

    if stage == "ingest":
        if not config.snapshots:
            raise StageDependencyError(stage, "at least one --snapshot")
        dataset_resolver = None
        if config.live:
            hub = HubClient(config.hub_endpoint, config.hub_token, config.rate_limit, config.max_retries)
            dataset_resolver = hub.resolve_dataset
        IngestService().run(config.snapshots, files.graph, config.min_likes, config.min_stars, config.signature_file,
                            config.validate_usage, resolver_cache(config), dataset_resolver)
        return

    graph = read_graph(files.graph)
    cache = ContentCache(config.cache_dir / "files")
    if stage == "fetch":
        FetchService(repository_client(config), cache, config.max_file_bytes, retrieval_patterns(config),
                     config.workers, progress).run(graph, files.fetch)
        return

    corpus = load_templates(config.template_dir)
    if stage == "scan":
        ScanService(cache, corpus, config.detection_noise_floor, tables, progress).run(
            graph, read_fetch_report(files.fetch), files.scans)
        return

    auditor = AuditService(corpus, tables, config.permissive_labels, config.coverage_threshold, config.top_orgs)
    scans = read_scans(files.scans)
    if stage == "audit":
        auditor.run(graph, scans, files.reports)
    else:
        ReportService().run(auditor.audit(graph, scans), files.reports, files.ingest_report)


def input_digests(config: PipelineConfig) -> dict:
    digests = {"snapshots": {p.name: sha256_file(p) for p in sorted(config.snapshots)}}
    digests["templates"] = {p.name: sha256_file(p) for p in sorted(Path(config.template_dir).glob("*.txt"))}
    for name in ("alias_file", "category_file", "signature_file"):
        digests[name] = sha256_file(getattr(config, name))
    return digests


def output_digests(out_dir: Path) -> dict:
    skip = {MANIFEST_FILE, TIMINGS_FILE, LOCK_FILE}
    return {
        p.relative_to(out_dir).as_posix(): sha256_file(p)
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name not in skip
    }


def run_pipeline(config: PipelineConfig, stages=None, progress=True, files: Optional[StageFiles] = None) -> dict:
    """
    Run ``stages`` (default: all) in order, each reading the previous stage's
    persisted output, then write the manifest.

    Raises:
        StageDependencyError: a stage's input file is missing.
        StageError: a stage failed; carries the stage name.
        RetriableFetchError: live fetching hit a quota or auth error.
    """
    stages = [s for s in STAGES if s in (stages or STAGES)]
    out = config.output_dir
    files = files or StageFiles.under(out)
    timings = {}
    with output_lock(out):
        for stage in stages:
            for path in files.inputs(stage):
                if not path.exists():
                    raise StageDependencyError(stage, path)
            start = time.perf_counter()
            try:
                run_stage(stage, config, progress, files)
            except (StageDependencyError, RetriableFetchError):
                raise
            except (ChainAuditError, OSError, ValueError, KeyError) as e:
                raise StageError(stage, e) from e
            timings[stage] = round(time.perf_counter() - start, 3)
            logger.info(f"Stage {stage} finished in {timings[stage]:.1f}s")

        manifest = {
            "tool": "chainaudit",
            "version": __version__,
            "stages": stages,
            "parameters": config.parameters(),
            "inputs": input_digests(config),
            "outputs": output_digests(out),
        }
        write_json(manifest, out / MANIFEST_FILE)
        write_json(timings, out / TIMINGS_FILE)
    return manifest


def read_sample(path: Path):
    sample = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts or line.startswith("#"):
                continue
            kinds = [k.value for k in ArtifactKind]
            if len(parts) != 2 or parts[0] not in kinds:
                raise ConfigError(f"{path}:{lineno}: expected '<kind> <id>' with kind one of {kinds}, "
                                  f"got {line.strip()!r}")
            sample.append((parts[0], parts[1]))
    return sample


def validate_retrieval(config: PipelineConfig, sample_path: Path):
    if config.repos_dir is None:
        raise ConfigError("validate needs --repos-dir")
    client = LocalRepositoryClient(config.repos_dir)
    corpus = load_templates(config.template_dir)
    patterns = retrieval_patterns(config)
    verdicts = {}
    rows = []
    for kind, artifact_id in read_sample(sample_path):
        tree = [e for e in client.tree(kind, artifact_id)
                if e.size_bytes is None or e.size_bytes <= config.max_file_bytes]

        def texts(paths):
            return [client.read(kind, artifact_id, p).decode("utf-8", errors="replace") for p in paths]

        pattern_found = present_licenses(texts(select_files(tree, config.max_file_bytes, patterns).paths),
                                         corpus, config.coverage_threshold)
        full_found = present_licenses(texts([e.path for e in tree]), corpus, config.coverage_threshold)
        verdict = validate_retrieval_coverage(pattern_found, full_found)
        verdicts.setdefault(kind, []).append(verdict)
        rows.append({"kind": kind, "id": artifact_id, "category": verdict.category.value,
                     "pattern_licenses": ";".join(sorted(pattern_found)),
                     "full_scan_licenses": ";".join(sorted(full_found))})
    out = config.output_dir / REPORTS_DIR
    write_table(rows, out, "retrieval_coverage_samples")
    write_table(coverage_summary(verdicts), out, "retrieval_coverage")
    logger.info(f"[Validate] {len(rows)} repositories compared, tables written to {out}")


def extension_histogram(config: PipelineConfig, tree_listing, top_n):
    if tree_listing is not None:
        paths = [e.path for entries in load_tree_listing(tree_listing).values() for e in entries]
    else:
        if config.repos_dir is None:
            raise ConfigError("histogram needs --tree-listing or --repos-dir")
        client = LocalRepositoryClient(config.repos_dir)
        graph = read_graph(config.output_dir / GRAPH_FILE)
        paths = [e.path for app in graph.ids(ArtifactKind.APPLICATION) for e in client.tree("application", app)]
    write_table(file_extension_histogram(paths, top_n), config.output_dir / REPORTS_DIR, "extension_histogram")
    logger.info(f"[Histogram] {len(paths)} files counted")


def live_records(config: PipelineConfig, args):
    with open(args.ids, "r", encoding="utf-8") as f:
        ids = [line.strip() for line in f if line.strip()]
    if args.platform == "hub":
        client = HubClient(config.hub_endpoint, config.hub_token, config.rate_limit, config.max_retries)
    else:
        client = ForgeClient(config.forge_endpoint, config.forge_token, config.rate_limit, config.max_retries)
        if args.discover:
            ids = client.discover(ids)
            logger.info(f"[Live] Code search found {len(ids)} candidate applications")
            if args.hits_out is not None:
                args.hits_out.parent.mkdir(parents=True, exist_ok=True)
                with open(args.hits_out, "w", encoding="utf-8") as f:
                    for row in client.hit_listing():
                        f.write(json.dumps(row, sort_keys=True) + "\n")
    report = fetch_live(args.platform, args.kind, ids, client, resolver_cache(config), args.out)
    logger.info(f"[Live] {report.written} records written to {args.out} "
                f"({report.cached} from cache, {len(report.unresolved)} unresolved)")


def main(argv=None) -> int:
    args = parse_arguments(argv)
    configure_logging(args)
    progress = not args.quiet
    try:
        config = build_config(args, require_inputs=args.command != 'fetch-live')
        files = StageFiles.under(config.output_dir, getattr(args, 'graph_file', None),
                                 getattr(args, 'scans_file', None))
        if args.command == 'run':
            run_pipeline(config, args.stage, progress, files)
        elif args.command in STAGES:
            run_pipeline(config, [args.command], progress, files)
        elif args.command == 'validate':
            validate_retrieval(config, args.sample)
        elif args.command == 'histogram':
            extension_histogram(config, args.tree_listing, args.top_n)
        elif args.command == 'fetch-live':
            live_records(config, args)
    except RetriableFetchError as e:
        logger.error(f"{e}; progress is saved, rerun later to resume.")
        return EXIT_RETRY_LATER
    except ChainAuditError as e:
        logger.error(str(e))
        return EXIT_FAILURE
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
