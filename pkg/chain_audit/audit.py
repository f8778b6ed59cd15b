"""
License integrity and attribution audits over a pruned supply-chain graph.

The integrity audit asks, per permissively-labeled artifact, whether the
declared license text is present and whether any copyright notice is.
The attribution audit asks whether compliant upstream notices survive,
after normalization, in the compliance files of downstream artifacts.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from chain_audit.errors import DegenerateNoticeError
from chain_audit.graph import ArtifactKind, ArtifactRecord, NodeKey, Platform, SupplyChain, SupplyChainGraph
from chain_audit.license_engine import (
    PRESENT_THRESHOLD,
    CopyrightNotice,
    LabelTables,
    LicenseCategory,
    LicenseDetection,
    LicenseReference,
    TemplateCorpus,
    card_license,
    categorize_license,
    default_tables,
    detect_licenses,
    find_license_references,
    is_permissive_label,
    notices_in_files,
)
from chain_audit.retrieval import FileClass, RetrievedFile

logger = logging.getLogger(__name__)

KIND_ORDER = [ArtifactKind.DATASET, ArtifactKind.MODEL, ArtifactKind.APPLICATION]
TextOrFiles = Union[str, Sequence[str]]


def normalize_notice(text: str) -> str:
    """Lowercase and keep only Unicode alphanumerics."""
    return "".join(c for c in text.lower() if c.isalnum())


def attribution_preserved(upstream_notice: str, downstream_text: str) -> bool:
    needle = normalize_notice(upstream_notice)
    if not needle:
        raise DegenerateNoticeError(f"Notice {upstream_notice!r} is empty after normalization")
    return needle in normalize_notice(downstream_text)


@dataclass
class ArtifactScan:
    """Everything the audits need to know about one artifact's retrieved files."""

    kind: ArtifactKind
    artifact_id: str
    files: List[dict] = field(default_factory=list)
    detections: List[LicenseDetection] = field(default_factory=list)
    references: List[LicenseReference] = field(default_factory=list)
    notices: List[CopyrightNotice] = field(default_factory=list)
    card_license: Optional[str] = None
    unretrievable: bool = False
    normalized_texts: List[str] = field(default_factory=list)

    @property
    def key(self) -> NodeKey:
        return (self.kind.value, self.artifact_id)

    def has_file_class(self, license_class: bool) -> bool:
        for f in self.files:
            fc = FileClass(f["file_class"])
            if (fc.is_license if license_class else fc == FileClass.README):
                return True
        return False

    def best_present(self, threshold: float = PRESENT_THRESHOLD) -> Optional[str]:
        """Spdx id of the highest present-level detection, ties broken by id."""
        best = None
        for d in self.detections:
            if d.coverage < threshold:
                continue
            if best is None or (-d.coverage, d.spdx_id) < (-best.coverage, best.spdx_id):
                best = d
        return best.spdx_id if best else None

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "id": self.artifact_id,
            "files": self.files,
            "detections": [
                {"spdx_id": d.spdx_id, "coverage": d.coverage, "file_path": d.file_path,
                 "location_class": d.location_class.value}
                for d in self.detections
            ],
            "references": [
                {"label": r.label, "file_path": r.file_path, "location_class": r.location_class.value}
                for r in self.references
            ],
            "notices": [
                {"raw_text": n.raw_text, "holder": n.holder, "years": list(n.years), "file_path": n.file_path,
                 "location_class": n.location_class.value if n.location_class else None}
                for n in self.notices
            ],
            "card_license": self.card_license,
            "unretrievable": self.unretrievable,
            "normalized_texts": self.normalized_texts,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ArtifactScan":
        artifact_id = obj["id"]
        return cls(
            kind=ArtifactKind(obj["kind"]),
            artifact_id=artifact_id,
            files=list(obj.get("files", [])),
            detections=[
                LicenseDetection(artifact_id, d["spdx_id"], float(d["coverage"]), d["file_path"],
                                 FileClass(d["location_class"]))
                for d in obj.get("detections", [])
            ],
            references=[
                LicenseReference(artifact_id, r["label"], r["file_path"], FileClass(r["location_class"]))
                for r in obj.get("references", [])
            ],
            notices=[
                CopyrightNotice(n["raw_text"], n["holder"], tuple(n["years"]), n.get("file_path"),
                                FileClass(n["location_class"]) if n.get("location_class") else None)
                for n in obj.get("notices", [])
            ],
            card_license=obj.get("card_license"),
            unretrievable=bool(obj.get("unretrievable")),
            normalized_texts=list(obj.get("normalized_texts", [])),
        )


def scan_artifact(kind: ArtifactKind, artifact_id: str, files: Sequence[RetrievedFile], corpus: TemplateCorpus,
                  unretrievable: bool = False, noise_floor: float = 0.05,
                  tables: Optional[LabelTables] = None) -> ArtifactScan:
    files = sorted(files, key=lambda f: f.path)
    tables = tables or default_tables()
    reference_labels = {t.label for t in corpus} | set(tables.aliases.values())
    root_readmes = [f for f in files if f.file_class == FileClass.README and "/" not in f.path]
    return ArtifactScan(
        kind=kind,
        artifact_id=artifact_id,
        files=[{"path": f.path, "file_class": f.file_class.value, "size_bytes": f.size_bytes} for f in files],
        detections=detect_licenses(files, corpus, noise_floor),
        references=find_license_references(files, reference_labels, tables),
        notices=notices_in_files(files),
        card_license=next((lic for lic in (card_license(f.content) for f in root_readmes) if lic), None),
        unretrievable=unretrievable,
        normalized_texts=[normalize_notice(f.content) for f in files],
    )


def effective_license(record: ArtifactRecord, scan: Optional[ArtifactScan],
                      threshold: float = PRESENT_THRESHOLD, tables: Optional[LabelTables] = None) -> Optional[str]:
    """
    Label an artifact is audited under.

    The metadata label when there is one; otherwise the model card's
    ``license`` field for hub artifacts, or the best present-level detection
    for forge applications.
    """
    tables = tables or default_tables()
    if record.declared_license:
        return tables.normalize(record.declared_license)
    if scan is None:
        return None
    if record.platform == Platform.HUB and scan.card_license:
        return tables.normalize(scan.card_license)
    if record.kind == ArtifactKind.APPLICATION:
        best = scan.best_present(threshold)
        return tables.normalize(best) if best else None
    return None


@dataclass
class PermissiveSubset:
    chains: List[SupplyChain]
    datasets: Set[str] = field(default_factory=set)
    models: Set[str] = field(default_factory=set)
    applications: Set[str] = field(default_factory=set)

    def keys(self) -> List[NodeKey]:
        out = [("dataset", d) for d in self.datasets]
        out += [("model", m) for m in self.models]
        out += [("application", a) for a in self.applications]
        return sorted(out)

    def counts(self) -> Dict[str, int]:
        return {"dataset": len(self.datasets), "model": len(self.models), "application": len(self.applications)}


def filter_permissive_chains(chains: Iterable[SupplyChain], labels: Dict[NodeKey, Optional[str]],
                             permissive: Iterable[str] = ("mit", "apache-2.0", "bsd-3-clause"),
                             tables: Optional[LabelTables] = None) -> PermissiveSubset:
    permissive = list(permissive)

    def ok(key):
        return is_permissive_label(labels.get(key), permissive, tables)

    kept = [c for c in sorted(set(chains))
            if ok(("dataset", c.dataset_id)) and ok(("model", c.model_id)) and ok(("application", c.application_id))]
    return PermissiveSubset(
        chains=kept,
        datasets={c.dataset_id for c in kept},
        models={c.model_id for c in kept},
        applications={c.application_id for c in kept},
    )


@dataclass(frozen=True)
class IntegrityVerdict:
    kind: ArtifactKind
    artifact_id: str
    label: Optional[str]
    max_coverage: float
    has_license_text: bool
    has_copyright: bool
    fully_compliant: bool
    unretrievable: bool = False

    @property
    def key(self) -> NodeKey:
        return (self.kind.value, self.artifact_id)


@dataclass
class IntegrityRow:
    kind: str
    total: int
    license_text: int
    copyright: int
    compliant: int

    @staticmethod
    def _pct(n, total):
        return 100.0 * n / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "total": self.total,
            "license_text": self.license_text,
            "license_text_pct": self._pct(self.license_text, self.total),
            "copyright": self.copyright,
            "copyright_pct": self._pct(self.copyright, self.total),
            "compliant": self.compliant,
            "compliant_pct": self._pct(self.compliant, self.total),
        }


@dataclass
class IntegrityResult:
    verdicts: List[IntegrityVerdict]
    rows: List[IntegrityRow]

    def by_key(self) -> Dict[NodeKey, IntegrityVerdict]:
        return {v.key: v for v in self.verdicts}


def integrity_audit(artifacts: Iterable[Tuple[NodeKey, Optional[str]]], scans: Dict[NodeKey, ArtifactScan],
                    corpus: TemplateCorpus, threshold: float = PRESENT_THRESHOLD) -> IntegrityResult:
    """
    Check each artifact's compliance payload.

    Args:
        artifacts: ``((kind, id), label)`` pairs, usually the permissive subset.
        scans: scan results by node key; a missing or unretrievable scan counts
            as lacking both license text and copyright.
        corpus: license templates; the label's own template decides license text.
    """
    verdicts = []
    for (kind, artifact_id), label in sorted(artifacts, key=lambda kv: kv[0]):
        scan = scans.get((kind, artifact_id))
        template = corpus.for_label(label)
        coverage = 0.0
        if scan is not None and template is not None:
            coverage = max((d.coverage for d in scan.detections if d.spdx_id == template.spdx_id), default=0.0)
        has_text = coverage >= threshold
        has_copyright = scan is not None and bool(scan.notices)
        verdicts.append(IntegrityVerdict(
            kind=ArtifactKind(kind),
            artifact_id=artifact_id,
            label=label,
            max_coverage=coverage,
            has_license_text=has_text,
            has_copyright=has_copyright,
            fully_compliant=has_text and has_copyright,
            unretrievable=scan is None or scan.unretrievable,
        ))

    rows = []
    for kind in KIND_ORDER:
        vs = [v for v in verdicts if v.kind == kind]
        rows.append(IntegrityRow(
            kind=kind.value,
            total=len(vs),
            license_text=sum(v.has_license_text for v in vs),
            copyright=sum(v.has_copyright for v in vs),
            compliant=sum(v.fully_compliant for v in vs),
        ))
    return IntegrityResult(verdicts, rows)


class AttributionSlice(str, Enum):
    S1_CD_TO_M = "S1"
    S2_CM_TO_A = "S2"
    S3_ANY_C_TO_A = "S3"
    S4_JOINT_TO_A = "S4"

    @property
    def description(self) -> str:
        return {
            "S1": "Compliant dataset -> model",
            "S2": "Compliant model -> application",
            "S3": "Any compliant upstream -> application",
            "S4": "Compliant dataset and model -> application",
        }[self.value]


@dataclass(frozen=True)
class SliceLink:
    upstream_ids: Tuple[str, ...]
    downstream_id: str
    preserved: bool


@dataclass
class SliceResult:
    slice: AttributionSlice
    evaluated: int
    preserved: int
    links: List[SliceLink] = field(default_factory=list)
    extras: Dict[str, object] = field(default_factory=dict)

    @property
    def not_preserved(self) -> int:
        return self.evaluated - self.preserved

    @property
    def rate(self) -> Optional[float]:
        return self.preserved / self.evaluated if self.evaluated else None


class NoticeMatcher:
    """
    Notice-in-text checks with normalization done once. A downstream text is
    one string or a list of per-file strings; a notice must sit inside one file.
    """

    def __init__(self, notices: Dict[NodeKey, List[str]], texts: Dict[NodeKey, TextOrFiles]):
        self.notices = notices
        self.texts = {
            k: [t for t in (normalize_notice(s) for s in ([v] if isinstance(v, str) else v)) if t]
            for k, v in texts.items()
        }
        self.degenerate: Set[Tuple[NodeKey, str]] = set()

    def preserved(self, upstream: NodeKey, downstream: NodeKey) -> bool:
        texts = self.texts.get(downstream, [])
        if not texts:
            return False
        for notice in self.notices.get(upstream, []):
            try:
                if any(attribution_preserved(notice, text) for text in texts):
                    return True
            except DegenerateNoticeError:
                if (upstream, notice) not in self.degenerate:
                    self.degenerate.add((upstream, notice))
                    logger.warning(f"Skipping degenerate notice {notice!r} of {upstream[1]}")
        return False


def _compliant(verdicts: Dict[NodeKey, IntegrityVerdict], kind: ArtifactKind) -> List[str]:
    return sorted(k[1] for k, v in verdicts.items() if k[0] == kind.value and v.fully_compliant)


def run_slice(slice: AttributionSlice, graph: SupplyChainGraph, verdicts: Dict[NodeKey, IntegrityVerdict],
              notices: Dict[NodeKey, List[str]], texts: Dict[NodeKey, TextOrFiles],
              matcher: Optional[NoticeMatcher] = None) -> SliceResult:
    """
    Evaluate one attribution slice.

    Args:
        slice: which population to evaluate.
        graph: the pruned graph; downstream artifacts are not limited to the
            permissive subset.
        verdicts: integrity verdicts by node key; compliance is read from them.
        notices: raw notice texts by node key.
        texts: downstream compliance text by node key, one string or one per
            file, raw or already normalized.
    """
    matcher = matcher or NoticeMatcher(notices, texts)
    compliant_datasets = set(_compliant(verdicts, ArtifactKind.DATASET))
    compliant_models = set(_compliant(verdicts, ArtifactKind.MODEL))
    links: List[SliceLink] = []
    extras: Dict[str, object] = {}

    if slice == AttributionSlice.S1_CD_TO_M:
        for d in sorted(compliant_datasets):
            for m in sorted(graph.models_of_dataset(d)):
                ok = matcher.preserved(("dataset", d), ("model", m))
                links.append(SliceLink((d,), m, ok))

    elif slice == AttributionSlice.S2_CM_TO_A:
        inherited = []
        for m in sorted(compliant_models):
            direct = graph.applications_of(m)
            for a in sorted(direct):
                links.append(SliceLink((m,), a, matcher.preserved(("model", m), ("application", a))))
            for derived in sorted(graph.descendants(m)):
                for a in sorted(graph.applications_of(derived) - direct):
                    inherited.append({
                        "model": m,
                        "via": derived,
                        "application": a,
                        "preserved": matcher.preserved(("model", m), ("application", a)),
                    })
        extras["inherited_links"] = inherited

    elif slice == AttributionSlice.S3_ANY_C_TO_A:
        dataset_only = model_only = 0
        for a in graph.ids(ArtifactKind.APPLICATION):
            models = graph.models_of_application(a)
            up_models = sorted(models & compliant_models)
            up_datasets = sorted(set().union(*(graph.effective_datasets(m) for m in models)) & compliant_datasets) \
                if models else []
            if not up_models and not up_datasets:
                continue
            target = ("application", a)
            by_dataset = any(matcher.preserved(("dataset", d), target) for d in up_datasets)
            by_model = any(matcher.preserved(("model", m), target) for m in up_models)
            dataset_only += by_dataset
            model_only += by_model
            links.append(SliceLink(tuple(up_datasets + up_models), a, by_dataset or by_model))
        extras["dataset_preserved"] = dataset_only
        extras["model_preserved"] = model_only

    elif slice == AttributionSlice.S4_JOINT_TO_A:
        for a in graph.ids(ArtifactKind.APPLICATION):
            target = ("application", a)
            paths = [
                (d, m)
                for m in sorted(graph.models_of_application(a) & compliant_models)
                for d in sorted(graph.effective_datasets(m) & compliant_datasets)
            ]
            if not paths:
                continue
            ok = any(matcher.preserved(("dataset", d), target) and matcher.preserved(("model", m), target)
                     for d, m in paths)
            upstream = sorted({d for d, _ in paths}) + sorted({m for _, m in paths})
            links.append(SliceLink(tuple(upstream), a, ok))

    return SliceResult(
        slice=slice,
        evaluated=len(links),
        preserved=sum(link.preserved for link in links),
        links=links,
        extras=extras,
    )


def attribution_audit(graph: SupplyChainGraph, verdicts: Dict[NodeKey, IntegrityVerdict],
                      scans: Dict[NodeKey, ArtifactScan]) -> List[SliceResult]:
    notices = {k: [n.raw_text for n in s.notices] for k, s in scans.items()}
    texts = {k: s.normalized_texts for k, s in scans.items()}
    matcher = NoticeMatcher(notices, texts)
    return [run_slice(s, graph, verdicts, notices, texts, matcher) for s in AttributionSlice]


def org_compliance(verdicts: Iterable[IntegrityVerdict], records: Dict[NodeKey, ArtifactRecord],
                   top_k: int = 15) -> List[dict]:
    """
    Compliance of the top_k hub organizations by follower count.

    Only organizations owning audited (permissively-labeled) hub artifacts
    take part. Ties in follower count are broken by name. The last row holds
    totals over the selected organizations.
    """
    by_org: Dict[str, List[IntegrityVerdict]] = defaultdict(list)
    followers: Dict[str, int] = {}
    for v in verdicts:
        record = records.get(v.key)
        if record is None or record.platform != Platform.HUB or not record.organization:
            continue
        by_org[record.organization].append(v)
        followers[record.organization] = max(followers.get(record.organization, 0), record.follower_count or 0)

    ranked = sorted(by_org, key=lambda o: (-followers[o], o))[:top_k]

    def row(name, n_followers, vs):
        n = len(vs)
        lic = sum(v.has_license_text for v in vs)
        cop = sum(v.has_copyright for v in vs)
        both = sum(v.fully_compliant for v in vs)
        return {
            "organization": name,
            "followers": n_followers,
            "artifacts": n,
            "has_license": lic,
            "has_license_pct": 100.0 * lic / n if n else 0.0,
            "has_copyright": cop,
            "has_copyright_pct": 100.0 * cop / n if n else 0.0,
            "has_both": both,
            "has_both_pct": 100.0 * both / n if n else 0.0,
        }

    rows = [row(o, followers[o], by_org[o]) for o in ranked]
    rows.append(row("Total", None, [v for o in ranked for v in by_org[o]]))
    return rows


@dataclass
class PayloadGapRow:
    kind: str
    total: int
    missing_readme: int
    missing_license_file: int
    missing_either: int

    def to_dict(self) -> dict:
        def pct(n):
            return 100.0 * n / self.total if self.total else 0.0

        return {
            "kind": self.kind,
            "total": self.total,
            "missing_license_file": self.missing_license_file,
            "missing_license_file_pct": pct(self.missing_license_file),
            "missing_readme": self.missing_readme,
            "missing_readme_pct": pct(self.missing_readme),
            "missing_either": self.missing_either,
            "missing_either_pct": pct(self.missing_either),
        }


def payload_gap_report(keys: Iterable[NodeKey], scans: Dict[NodeKey, ArtifactScan]) -> List[PayloadGapRow]:
    """Missing LICENSE/README files per kind."""
    keys = sorted(set(keys))
    rows = []
    for kind in KIND_ORDER:
        kind_keys = [k for k in keys if k[0] == kind.value]
        missing_readme = missing_license = missing_either = 0
        for key in kind_keys:
            scan = scans.get(key)
            has_license = scan is not None and scan.has_file_class(license_class=True)
            has_readme = scan is not None and scan.has_file_class(license_class=False)
            missing_license += not has_license
            missing_readme += not has_readme
            missing_either += not (has_license and has_readme)
        rows.append(PayloadGapRow(kind.value, len(kind_keys), missing_readme, missing_license, missing_either))
    return rows


def license_location_report(keys: Iterable[NodeKey], scans: Dict[NodeKey, ArtifactScan],
                            threshold: float = PRESENT_THRESHOLD) -> List[dict]:
    """
    Where license text, license mentions and copyright notices were found,
    license-class files vs READMEs, counted once per file.
    """
    keys = sorted(set(keys))
    rows = []
    for kind in KIND_ORDER:
        counts = {m: Counter() for m in ("license_text", "license_mention", "copyright_notice")}
        for key in (k for k in keys if k[0] == kind.value):
            scan = scans.get(key)
            if scan is None:
                continue
            present_files = {(d.file_path, d.location_class) for d in scan.detections if d.coverage >= threshold}
            mention_files = {(r.file_path, r.location_class) for r in scan.references}
            notice_files = {(n.file_path, n.location_class) for n in scan.notices}
            for measure, found in (("license_text", present_files), ("license_mention", mention_files),
                                   ("copyright_notice", notice_files)):
                for _, location in found:
                    if location is None:
                        continue
                    counts[measure]["license" if location.is_license else "readme"] += 1

        for measure, c in counts.items():
            total = c["license"] + c["readme"]
            rows.append({
                "kind": kind.value,
                "measure": measure,
                "license_files": c["license"],
                "license_files_pct": 100.0 * c["license"] / total if total else 0.0,
                "readme_files": c["readme"],
                "readme_files_pct": 100.0 * c["readme"] / total if total else 0.0,
            })
    return rows


def category_distribution(labels: Dict[NodeKey, Optional[str]], tables: Optional[LabelTables] = None) -> List[dict]:
    """Count of artifacts per license category and kind."""
    counts = {kind.value: Counter() for kind in KIND_ORDER}
    for (kind, _), label in labels.items():
        counts[kind][categorize_license(label, tables)] += 1
    rows = []
    for category in LicenseCategory:
        row = {"category": category.value}
        for kind in KIND_ORDER:
            row[kind.value] = counts[kind.value][category]
        row["total"] = sum(row[k.value] for k in KIND_ORDER)
        rows.append(row)
    return rows
