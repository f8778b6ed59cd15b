"""
Dataset → model → application provenance graph.

Artifacts come from line-delimited JSON snapshots of platform metadata.
Models are linked to their base models and to the datasets named in their
metadata; applications are linked to the models they provably load. The
pruned graph keeps only artifacts that sit on at least one complete
dataset → model → application chain.
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Set, Tuple

import networkx as nx

from chain_audit.errors import DuplicateArtifactError, EmptySnapshotError, SnapshotError
from chain_audit.usage import UsageSignature, detect_model_usage

logger = logging.getLogger(__name__)


class ArtifactKind(str, Enum):
    DATASET = "dataset"
    MODEL = "model"
    APPLICATION = "application"


class Platform(str, Enum):
    HUB = "hub"
    FORGE = "forge"


class EdgeType(str, Enum):
    TRAINED_ON = "trained_on"
    BASE_OF = "base_of"
    USED_BY = "used_by"


EDGE_SIGNATURES = {
    EdgeType.TRAINED_ON: (ArtifactKind.DATASET, ArtifactKind.MODEL),
    EdgeType.BASE_OF: (ArtifactKind.MODEL, ArtifactKind.MODEL),
    EdgeType.USED_BY: (ArtifactKind.MODEL, ArtifactKind.APPLICATION),
}

DEFAULT_PLATFORM = {
    ArtifactKind.DATASET: Platform.HUB,
    ArtifactKind.MODEL: Platform.HUB,
    ArtifactKind.APPLICATION: Platform.FORGE,
}

NodeKey = Tuple[str, str]


def _as_list(value) -> List[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value] if value.strip() else []
    return [str(v) for v in value if v is not None and str(v).strip()]


def _as_count(value, name: str) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class ArtifactRecord:
    """
    One dataset, model or application with its platform metadata.

    ``candidate_models`` and ``sources`` only exist for applications: the
    model ids a code search associated with the repository, and the
    repository's source files as ``(path, text)`` pairs.
    """

    id: str
    kind: ArtifactKind
    platform: Platform
    declared_license: Optional[str] = None
    engagement: int = 0
    organization: Optional[str] = None
    follower_count: Optional[int] = None
    metadata_dataset_refs: Tuple[str, ...] = ()
    base_model_ref: Optional[str] = None
    candidate_models: Tuple[str, ...] = ()
    sources: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise ValueError("artifact id must be non-empty")
        if self.engagement < 0:
            raise ValueError(f"{self.id}: engagement must be non-negative")
        if self.follower_count is not None and self.follower_count < 0:
            raise ValueError(f"{self.id}: follower count must be non-negative")
        if self.kind != ArtifactKind.MODEL and (self.metadata_dataset_refs or self.base_model_ref):
            raise ValueError(f"{self.id}: only models carry dataset refs or a base model")
        if self.kind != ArtifactKind.APPLICATION and (self.candidate_models or self.sources):
            raise ValueError(f"{self.id}: only applications carry candidate models or sources")

    @property
    def key(self) -> NodeKey:
        return (self.kind.value, self.id)

    @classmethod
    def from_json(cls, obj: dict) -> "ArtifactRecord":
        kind = ArtifactKind(obj["kind"])
        platform = Platform(obj["platform"]) if obj.get("platform") else DEFAULT_PLATFORM[kind]
        artifact_id = str(obj["id"]).strip()
        organization = obj.get("organization")
        if organization is None and "/" in artifact_id:
            organization = artifact_id.split("/", 1)[0]
        license_label = obj.get("license")
        if isinstance(license_label, list):
            license_label = license_label[0] if license_label else None
        base_refs = _as_list(obj.get("base_model"))
        if len(base_refs) > 1:
            logger.debug(f"{artifact_id}: {len(base_refs)} base models listed, following {base_refs[0]}")
        sources = obj.get("sources") or {}
        engagement = _as_count(obj.get("engagement"), "engagement")
        followers = _as_count(obj.get("followers"), "followers")
        return cls(
            id=artifact_id,
            kind=kind,
            platform=platform,
            declared_license=str(license_label).strip().lower() if license_label else None,
            engagement=engagement or 0,
            organization=organization or None,
            follower_count=followers,
            metadata_dataset_refs=tuple(_as_list(obj.get("datasets"))),
            base_model_ref=base_refs[0].strip() if base_refs else None,
            candidate_models=tuple(_as_list(obj.get("models"))),
            sources=tuple(sorted((str(p), str(t)) for p, t in dict(sources).items())),
        )

    def to_json(self, include_sources=True) -> dict:
        obj = {
            "id": self.id,
            "kind": self.kind.value,
            "platform": self.platform.value,
            "license": self.declared_license,
            "engagement": self.engagement,
            "organization": self.organization,
            "followers": self.follower_count,
        }
        if self.kind == ArtifactKind.MODEL:
            obj["datasets"] = list(self.metadata_dataset_refs)
            obj["base_model"] = self.base_model_ref
        if include_sources and self.kind == ArtifactKind.APPLICATION:
            obj["models"] = list(self.candidate_models)
            obj["sources"] = dict(self.sources)
        return obj


@dataclass(frozen=True)
class LineageEdge:
    src: str
    dst: str
    edge_type: EdgeType
    inherited: bool = False


@dataclass(frozen=True, order=True)
class SupplyChain:
    dataset_id: str
    model_id: str
    application_id: str


@dataclass
class Snapshot:
    path: Path
    records: List[ArtifactRecord]
    skipped: int = 0

    def __iter__(self) -> Iterator[ArtifactRecord]:
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def load_snapshot(path) -> Snapshot:
    """
    Read a line-delimited JSON snapshot.

    Malformed lines (bad JSON, bad UTF-8, missing or invalid fields) are
    skipped and counted. Blank lines are ignored.

    Raises:
        OSError: the file cannot be read.
        EmptySnapshotError: no line yielded a record.
    """
    path = Path(path)
    records = []
    skipped = 0
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw.decode("utf-8"))
                if not isinstance(obj, dict):
                    raise ValueError("record is not an object")
                records.append(ArtifactRecord.from_json(obj))
            except (UnicodeDecodeError, KeyError, TypeError, ValueError) as e:
                skipped += 1
                logger.warning(f"{path}:{lineno}: skipping malformed record ({e})")
    if not records:
        raise EmptySnapshotError(path, skipped)
    logger.info(f"Loaded {len(records)} records from {path} ({skipped} malformed lines skipped)")
    return Snapshot(path=path, records=records, skipped=skipped)


def filter_by_engagement(artifacts: Iterable[ArtifactRecord], min_engagement: int) -> List[ArtifactRecord]:
    if min_engagement < 0:
        raise ValueError(f"min_engagement must be non-negative, got {min_engagement}")
    return [a for a in artifacts if a.engagement >= min_engagement]


class ModelIndex:
    """Resolver over snapshot models: exact id, else a unique case-insensitive match."""

    def __init__(self, records: Iterable[ArtifactRecord]):
        self.by_id: Dict[str, ArtifactRecord] = {}
        self.by_lower: Dict[str, List[ArtifactRecord]] = {}
        for record in records:
            if record.kind != ArtifactKind.MODEL:
                continue
            self.by_id[record.id] = record
            self.by_lower.setdefault(record.id.lower(), []).append(record)

    def __call__(self, ref: str) -> Optional[ArtifactRecord]:
        ref = ref.strip()
        if ref in self.by_id:
            return self.by_id[ref]
        matches = self.by_lower.get(ref.lower(), [])
        return matches[0] if len(matches) == 1 else None


class DatasetIndex:
    """
    Resolver from raw dataset references to fully-qualified dataset ids.

    Tries, in order: an explicit alias (e.g. from the resolver cache), the
    exact id, and for bare names the unique dataset whose name segment matches.
    """

    def __init__(self, records: Iterable[ArtifactRecord], aliases: Optional[Dict[str, str]] = None):
        self.ids: Set[str] = set()
        self.by_name: Dict[str, Set[str]] = {}
        self.aliases = dict(aliases or {})
        for record in records:
            if record.kind != ArtifactKind.DATASET:
                continue
            self.ids.add(record.id)
            self.by_name.setdefault(record.id.rsplit("/", 1)[-1].lower(), set()).add(record.id)

    def __call__(self, ref: str) -> Optional[str]:
        if ref in self.aliases:
            return self.aliases[ref]
        if ref in self.ids:
            return ref
        if "/" not in ref:
            matches = self.by_name.get(ref.lower(), set())
            if len(matches) == 1:
                return next(iter(matches))
        return None


@dataclass
class LineageResult:
    models: List[ArtifactRecord]
    resolved_refs: Dict[str, str] = field(default_factory=dict)
    dangling: List[Tuple[str, str]] = field(default_factory=list)
    cycles: List[List[str]] = field(default_factory=list)


def _find_cycles(models: Dict[str, ArtifactRecord], resolved_refs: Dict[str, str]) -> List[List[str]]:
    cycles = []
    seen_cycles = set()
    done: Set[str] = set()
    for start in sorted(models):
        path: List[str] = []
        on_path: Set[str] = set()
        current = start
        while current is not None and current not in done:
            if current in on_path:
                cycle = path[path.index(current):]
                pivot = cycle.index(min(cycle))
                canonical = tuple(cycle[pivot:] + cycle[:pivot])
                if canonical not in seen_cycles:
                    seen_cycles.add(canonical)
                    cycles.append(list(canonical))
                break
            path.append(current)
            on_path.add(current)
            ref = models[current].base_model_ref
            current = resolved_refs.get(ref) if ref else None
        done.update(path)
    return cycles


def resolve_base_lineage(models: Iterable[ArtifactRecord],
                         resolver: Callable[[str], Optional[ArtifactRecord]]) -> LineageResult:
    """
    Add every transitively reachable base model to ``models``.

    Ancestors are added regardless of their engagement. Each model appears
    once. Unresolvable references are reported as dangling; base_model cycles
    are cut by the visited set and reported.
    """
    out: Dict[str, ArtifactRecord] = {}
    for model in models:
        out.setdefault(model.id, model)

    result = LineageResult(models=[])
    queue = sorted(out)
    while queue:
        model = out[queue.pop(0)]
        ref = model.base_model_ref
        if not ref:
            continue
        if ref in result.resolved_refs:
            continue
        if ref in out:
            result.resolved_refs[ref] = ref
            continue
        ancestor = resolver(ref)
        if ancestor is None or ancestor.kind != ArtifactKind.MODEL:
            result.dangling.append((model.id, ref))
            logger.warning(f"Dangling lineage: {model.id} names base model {ref}, which cannot be resolved")
            continue
        result.resolved_refs[ref] = ancestor.id
        if ancestor.id not in out:
            out[ancestor.id] = ancestor
            queue.append(ancestor.id)

    result.cycles = _find_cycles(out, result.resolved_refs)
    for cycle in result.cycles:
        logger.warning(f"base_model cycle: {' -> '.join(cycle)}")
    result.models = [out[k] for k in sorted(out)]
    return result


@dataclass
class DatasetRefResolution:
    model_id: str
    resolved: List[str] = field(default_factory=list)
    unresolved: List[str] = field(default_factory=list)


def resolve_dataset_refs(model: ArtifactRecord, resolver: Callable[[str], Optional[str]]) -> DatasetRefResolution:
    """
    Map the raw ``datasets`` entries of a model to fully-qualified dataset ids.

    References are trimmed and tried verbatim; when that fails and the
    reference has an organization segment, the segment is lowercased and
    tried again.
    """
    resolution = DatasetRefResolution(model_id=model.id)
    for raw in model.metadata_dataset_refs:
        ref = raw.strip()
        if not ref:
            continue
        hit = resolver(ref)
        if hit is None and "/" in ref:
            org, name = ref.split("/", 1)
            if org.lower() != org:
                hit = resolver(f"{org.lower()}/{name}")
        if hit is None:
            if raw not in resolution.unresolved:
                resolution.unresolved.append(raw)
        elif hit not in resolution.resolved:
            resolution.resolved.append(hit)
    return resolution


class SupplyChainGraph:
    """
    Typed provenance graph over ``networkx.DiGraph``.

    Nodes are ``(kind, id)`` keys carrying the ArtifactRecord; edges carry
    ``edge_type`` and ``inherited`` (True for dataset lineage that a model
    inherits from a base model and that pruning made explicit).
    """

    def __init__(self):
        self.g = nx.DiGraph()

    def __len__(self):
        return self.g.number_of_nodes()

    def __contains__(self, key: NodeKey):
        return key in self.g

    def add_artifact(self, record: ArtifactRecord):
        if record.key in self.g:
            raise DuplicateArtifactError(record.platform.value, record.kind.value, record.id)
        self.g.add_node(record.key, record=record)

    def add_edge(self, src: str, dst: str, edge_type: EdgeType, inherited=False):
        src_kind, dst_kind = EDGE_SIGNATURES[edge_type]
        u, v = (src_kind.value, src), (dst_kind.value, dst)
        if u not in self.g or v not in self.g:
            raise KeyError(f"{edge_type.value} edge {src} -> {dst} has a missing endpoint")
        if self.g.has_edge(u, v):
            return
        self.g.add_edge(u, v, edge_type=edge_type, inherited=inherited)

    def get(self, kind: ArtifactKind, artifact_id: str) -> Optional[ArtifactRecord]:
        node = self.g.nodes.get((kind.value, artifact_id))
        return node["record"] if node else None

    def artifacts(self, kind: Optional[ArtifactKind] = None) -> List[ArtifactRecord]:
        keys = sorted(k for k in self.g.nodes if kind is None or k[0] == kind.value)
        return [self.g.nodes[k]["record"] for k in keys]

    def ids(self, kind: ArtifactKind) -> List[str]:
        return sorted(k[1] for k in self.g.nodes if k[0] == kind.value)

    def edges(self) -> List[LineageEdge]:
        out = []
        for (_, src), (_, dst), data in self.g.edges(data=True):
            out.append(LineageEdge(src, dst, data["edge_type"], data.get("inherited", False)))
        return sorted(out, key=lambda e: (e.edge_type.value, e.src, e.dst))

    def _neighbors(self, key: NodeKey, kind: ArtifactKind, successors: bool) -> Set[str]:
        if key not in self.g:
            return set()
        nodes = self.g.successors(key) if successors else self.g.predecessors(key)
        return {n[1] for n in nodes if n[0] == kind.value}

    def base_models(self, model_id: str) -> Set[str]:
        return self._neighbors(("model", model_id), ArtifactKind.MODEL, successors=False)

    def ancestors(self, model_id: str) -> Set[str]:
        key = ("model", model_id)
        if key not in self.g:
            return set()
        return {n[1] for n in nx.ancestors(self.g, key) if n[0] == ArtifactKind.MODEL.value}

    def descendants(self, model_id: str) -> Set[str]:
        key = ("model", model_id)
        if key not in self.g:
            return set()
        return {n[1] for n in nx.descendants(self.g, key) if n[0] == ArtifactKind.MODEL.value}

    def direct_datasets(self, model_id: str) -> Set[str]:
        return self._neighbors(("model", model_id), ArtifactKind.DATASET, successors=False)

    def effective_datasets(self, model_id: str) -> Set[str]:
        """Datasets a model is trained on directly or through any base_of ancestor."""
        key = ("model", model_id)
        if key not in self.g:
            return set()
        return {n[1] for n in nx.ancestors(self.g, key) if n[0] == ArtifactKind.DATASET.value}

    def models_of_dataset(self, dataset_id: str) -> Set[str]:
        return self._neighbors(("dataset", dataset_id), ArtifactKind.MODEL, successors=True)

    def applications_of(self, model_id: str) -> Set[str]:
        return self._neighbors(("model", model_id), ArtifactKind.APPLICATION, successors=True)

    def models_of_application(self, application_id: str) -> Set[str]:
        return self._neighbors(("application", application_id), ArtifactKind.MODEL, successors=False)

    def edge_inherited(self, src: NodeKey, dst: NodeKey) -> bool:
        return bool(self.g.edges[src, dst].get("inherited", False))

    def would_cycle(self, base_id: str, model_id: str) -> bool:
        u, v = ("model", base_id), ("model", model_id)
        return u == v or nx.has_path(self.g, v, u)


@dataclass
class BuildReport:
    dangling_base_models: List[Tuple[str, str]] = field(default_factory=list)
    cycle_edges_dropped: List[Tuple[str, str]] = field(default_factory=list)
    resolved_dataset_refs: int = 0
    unresolved_dataset_refs: Dict[str, List[str]] = field(default_factory=dict)
    datasets_missing_from_snapshot: List[str] = field(default_factory=list)
    usage_candidates: int = 0
    usage_confirmed: int = 0
    usage_models_missing: int = 0

    def to_json(self) -> dict:
        unique_unresolved = sorted({r for refs in self.unresolved_dataset_refs.values() for r in refs})
        return {
            "dangling_base_models": [list(p) for p in self.dangling_base_models],
            "cycle_edges_dropped": [list(p) for p in self.cycle_edges_dropped],
            "resolved_dataset_refs": self.resolved_dataset_refs,
            "unresolved_dataset_refs": unique_unresolved,
            "datasets_missing_from_snapshot": sorted(self.datasets_missing_from_snapshot),
            "usage_candidates": self.usage_candidates,
            "usage_confirmed": self.usage_confirmed,
            "usage_models_missing": self.usage_models_missing,
        }


def _application_uses(app: ArtifactRecord, model_id: str, signatures: List[UsageSignature]) -> bool:
    return any(
        detect_model_usage(text, model_id, signatures)
        for path, text in app.sources
        if path.lower().endswith(".py")
    )


def build_supply_chain_graph(datasets: Iterable[ArtifactRecord],
                             models: Iterable[ArtifactRecord],
                             applications: Iterable[ArtifactRecord],
                             dataset_resolver: Callable[[str], Optional[str]],
                             signatures: Optional[List[UsageSignature]] = None,
                             validate_usage: bool = True) -> Tuple[SupplyChainGraph, BuildReport]:
    """
    Assemble the unpruned graph. The result does not depend on input order.

    Args:
        datasets, models, applications: artifact records; models should already
            include their resolved ancestors.
        dataset_resolver: raw dataset reference → fully-qualified id or None.
        signatures: usage signatures, required when ``validate_usage`` is set.
        validate_usage (bool): confirm each candidate model in the application's
            Python sources before adding a used_by edge.
    """
    if validate_usage and not signatures:
        raise ValueError("Usage validation is enabled but no signatures were given")

    graph = SupplyChainGraph()
    report = BuildReport()
    models = sorted(models, key=lambda r: r.id)
    for record in sorted(list(datasets) + models + list(applications), key=lambda r: r.key):
        graph.add_artifact(record)

    model_index = {m.id: m for m in models}
    lower_index: Dict[str, List[str]] = {}
    for m in models:
        lower_index.setdefault(m.id.lower(), []).append(m.id)

    for model in models:
        ref = model.base_model_ref
        if not ref:
            continue
        base_id = ref if ref in model_index else None
        if base_id is None and len(lower_index.get(ref.lower(), [])) == 1:
            base_id = lower_index[ref.lower()][0]
        if base_id is None:
            report.dangling_base_models.append((model.id, ref))
            continue
        if graph.would_cycle(base_id, model.id):
            report.cycle_edges_dropped.append((base_id, model.id))
            logger.warning(f"Dropping base_of edge {base_id} -> {model.id}: it closes a cycle")
            continue
        graph.add_edge(base_id, model.id, EdgeType.BASE_OF)

    for model in models:
        resolution = resolve_dataset_refs(model, dataset_resolver)
        if resolution.unresolved:
            report.unresolved_dataset_refs[model.id] = resolution.unresolved
        for dataset_id in resolution.resolved:
            if ("dataset", dataset_id) not in graph:
                report.datasets_missing_from_snapshot.append(dataset_id)
                continue
            report.resolved_dataset_refs += 1
            graph.add_edge(dataset_id, model.id, EdgeType.TRAINED_ON)

    for app in graph.artifacts(ArtifactKind.APPLICATION):
        for model_id in sorted(set(app.candidate_models)):
            report.usage_candidates += 1
            if model_id not in model_index:
                report.usage_models_missing += 1
                continue
            if validate_usage and not _application_uses(app, model_id, signatures):
                continue
            report.usage_confirmed += 1
            graph.add_edge(model_id, app.id, EdgeType.USED_BY)

    report.datasets_missing_from_snapshot = sorted(set(report.datasets_missing_from_snapshot))
    return graph, report


def prune_incomplete_chains(graph: SupplyChainGraph) -> SupplyChainGraph:
    """
    Keep the maximal subgraph of complete dataset → model → application chains.

    A model survives when it has dataset lineage (direct or through an
    ancestor) and at least one application. Lineage a surviving model inherits
    through an ancestor is kept as an explicit ``inherited`` trained_on edge,
    so pruning an already pruned graph changes nothing.
    """
    lineage = {m: graph.effective_datasets(m) for m in graph.ids(ArtifactKind.MODEL)}
    keep_models = {m for m, ds in lineage.items() if ds and graph.applications_of(m)}
    keep_datasets = set().union(*(lineage[m] for m in keep_models)) if keep_models else set()
    keep_apps = set().union(*(graph.applications_of(m) for m in keep_models)) if keep_models else set()

    pruned = SupplyChainGraph()
    for record in graph.artifacts():
        kept = {
            ArtifactKind.DATASET: keep_datasets,
            ArtifactKind.MODEL: keep_models,
            ArtifactKind.APPLICATION: keep_apps,
        }[record.kind]
        if record.id in kept:
            pruned.add_artifact(record)

    for model_id in sorted(keep_models):
        for base_id in sorted(graph.base_models(model_id) & keep_models):
            pruned.add_edge(base_id, model_id, EdgeType.BASE_OF)
        direct = graph.direct_datasets(model_id)
        for dataset_id in sorted(lineage[model_id]):
            inherited = dataset_id not in direct or graph.edge_inherited(("dataset", dataset_id), ("model", model_id))
            pruned.add_edge(dataset_id, model_id, EdgeType.TRAINED_ON, inherited=inherited)
        for app_id in sorted(graph.applications_of(model_id)):
            pruned.add_edge(model_id, app_id, EdgeType.USED_BY)

    logger.info(
        f"Pruned graph: {len(keep_datasets)} datasets, {len(keep_models)} models, {len(keep_apps)} applications "
        f"(from {len(graph)} artifacts)"
    )
    return pruned


def enumerate_chains(graph: SupplyChainGraph) -> List[SupplyChain]:
    """All distinct (dataset, model, application) paths, inherited lineage included, sorted."""
    chains = []
    for model_id in graph.ids(ArtifactKind.MODEL):
        apps = sorted(graph.applications_of(model_id))
        if not apps:
            continue
        for dataset_id in sorted(graph.effective_datasets(model_id)):
            chains.extend(SupplyChain(dataset_id, model_id, app_id) for app_id in apps)
    return sorted(chains)


@dataclass
class DisclosureReport:
    total_models: int
    with_base_model: int
    with_datasets: int
    with_like: int

    @staticmethod
    def _pct(count, total):
        return 100.0 * count / total if total else 0.0

    def rows(self) -> List[dict]:
        return [
            {"field": "Total Models", "count": self.total_models, "percent": 100.0 if self.total_models else 0.0},
            {"field": "Has base_model tag", "count": self.with_base_model,
             "percent": self._pct(self.with_base_model, self.total_models)},
            {"field": "Has datasets tag", "count": self.with_datasets,
             "percent": self._pct(self.with_datasets, self.total_models)},
            {"field": "Has at least one like", "count": self.with_like,
             "percent": self._pct(self.with_like, self.total_models)},
        ]


def lineage_disclosure_stats(snapshot: Iterable[ArtifactRecord]) -> DisclosureReport:
    models = [r for r in snapshot if r.kind == ArtifactKind.MODEL]
    return DisclosureReport(
        total_models=len(models),
        with_base_model=sum(1 for m in models if m.base_model_ref),
        with_datasets=sum(1 for m in models if m.metadata_dataset_refs),
        with_like=sum(1 for m in models if m.engagement >= 1),
    )


def write_graph(graph: SupplyChainGraph, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in graph.artifacts():
            f.write(json.dumps({"type": "node", **record.to_json(include_sources=False)}, sort_keys=True) + "\n")
        for edge in graph.edges():
            f.write(json.dumps({
                "type": "edge",
                "src": edge.src,
                "dst": edge.dst,
                "edge_type": edge.edge_type.value,
                "inherited": edge.inherited,
            }, sort_keys=True) + "\n")


def read_graph(path) -> SupplyChainGraph:
    """
    Load a graph written by ``write_graph``.

    Raises:
        DuplicateArtifactError: an artifact id occurs twice for the same kind.
        SnapshotError: a line is not a valid node or edge.
    """
    graph = SupplyChainGraph()
    edges = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if obj.pop("type") == "node":
                    graph.add_artifact(ArtifactRecord.from_json(obj))
                else:
                    edges.append((obj["src"], obj["dst"], EdgeType(obj["edge_type"]), bool(obj.get("inherited"))))
            except DuplicateArtifactError:
                raise
            except (KeyError, TypeError, ValueError) as e:
                raise SnapshotError(f"{path}:{lineno}: invalid graph line ({e})") from e
    for src, dst, edge_type, inherited in edges:
        try:
            graph.add_edge(src, dst, edge_type, inherited=inherited)
        except KeyError as e:
            raise SnapshotError(f"{path}: {e}") from e
    return graph
