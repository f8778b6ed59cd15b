import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from chain_audit.audit import (
    ArtifactScan,
    IntegrityResult,
    PayloadGapRow,
    PermissiveSubset,
    SliceResult,
    attribution_audit,
    category_distribution,
    effective_license,
    filter_permissive_chains,
    integrity_audit,
    license_location_report,
    org_compliance,
    payload_gap_report,
)
from chain_audit.graph import NodeKey, SupplyChainGraph, enumerate_chains
from chain_audit.license_engine import PRESENT_THRESHOLD, LabelTables, TemplateCorpus, default_tables
from chain_audit.reports import render_summary, slice_links, slice_rows, write_table

logger = logging.getLogger(__name__)

VERDICT_COLUMNS = ["kind", "id", "label", "max_coverage", "has_license_text", "has_copyright",
                   "fully_compliant", "unretrievable"]


@dataclass
class AuditOutcome:
    labels: Dict[NodeKey, Optional[str]]
    subset: PermissiveSubset
    integrity: IntegrityResult
    slices: List[SliceResult]
    org_rows: List[dict]
    gaps: List[PayloadGapRow]
    locations: List[dict]
    categories: List[dict]


class AuditService:
    """Stage 3: integrity and attribution audits over the pruned graph and the scans."""

    def __init__(self, corpus: TemplateCorpus, tables: Optional[LabelTables] = None,
                 permissive=("mit", "apache-2.0", "bsd-3-clause"), threshold: float = PRESENT_THRESHOLD,
                 top_orgs: int = 15):
        self.corpus = corpus
        self.tables = tables or default_tables()
        self.permissive = list(permissive)
        self.threshold = threshold
        self.top_orgs = top_orgs

    def audit(self, graph: SupplyChainGraph, scans: Dict[NodeKey, ArtifactScan]) -> AuditOutcome:
        records = {r.key: r for r in graph.artifacts()}
        labels = {
            key: effective_license(record, scans.get(key), self.threshold, self.tables) or None
            for key, record in sorted(records.items())
        }
        chains = enumerate_chains(graph)
        subset = filter_permissive_chains(chains, labels, self.permissive, self.tables)
        logger.info(f"[Audit] {len(subset.chains)}/{len(chains)} chains are permissive end to end: {subset.counts()}")

        integrity = integrity_audit(((k, labels[k]) for k in subset.keys()), scans, self.corpus, self.threshold)
        for row in integrity.rows:
            logger.info(f"[Audit] {row.kind}: {row.compliant}/{row.total} fully compliant")
        verdicts = integrity.by_key()

        slices = attribution_audit(graph, verdicts, scans)
        for s in slices:
            logger.info(f"[Audit] {s.slice.value}: {s.preserved}/{s.evaluated} preserved")

        org_rows = org_compliance(integrity.verdicts, records, self.top_orgs)
        gaps = payload_gap_report(records, scans)
        locations = license_location_report(subset.keys(), scans, self.threshold)
        categories = category_distribution(labels, self.tables)
        return AuditOutcome(labels, subset, integrity, slices, org_rows, gaps, locations, categories)

    def run(self, graph: SupplyChainGraph, scans: Dict[NodeKey, ArtifactScan], out_dir) -> AuditOutcome:
        out_dir = Path(out_dir)
        outcome = self.audit(graph, scans)

        write_table([r.to_dict() for r in outcome.integrity.rows], out_dir, "integrity")
        write_table([
            {"kind": v.kind.value, "id": v.artifact_id, "label": v.label, "max_coverage": v.max_coverage,
             "has_license_text": v.has_license_text, "has_copyright": v.has_copyright,
             "fully_compliant": v.fully_compliant, "unretrievable": v.unretrievable}
            for v in outcome.integrity.verdicts
        ], out_dir, "integrity_verdicts", columns=VERDICT_COLUMNS)
        write_table(slice_rows(outcome.slices), out_dir, "slices", decimals=2)
        write_table(slice_links(outcome.slices), out_dir, "slice_links",
                    columns=["slice", "upstream", "downstream", "preserved"])
        inherited = [link for s in outcome.slices for link in s.extras.get("inherited_links", [])]
        write_table(inherited, out_dir, "slices_inherited", columns=["model", "via", "application", "preserved"])
        write_table(outcome.org_rows, out_dir, "org_compliance", integer_columns=["followers"])
        write_table([g.to_dict() for g in outcome.gaps], out_dir, "payload_gap")
        write_table(outcome.locations, out_dir, "license_locations")
        write_table(outcome.categories, out_dir, "license_categories")
        logger.info(f"[Audit] Reports written to {out_dir}")
        return outcome


class ReportService:
    """Markdown summary of an audit run."""

    def run(self, outcome: AuditOutcome, out_dir, ingest_report: Optional[Path] = None) -> Path:
        disclosure = None
        if ingest_report is not None and Path(ingest_report).is_file():
            with open(ingest_report, "r", encoding="utf-8") as f:
                disclosure = json.load(f).get("disclosure")
        text = render_summary(outcome.integrity.rows, outcome.slices, outcome.gaps,
                              outcome.subset.counts(), disclosure)
        path = Path(out_dir) / "summary.md"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"[Report] Summary written to {path}")
        return path
