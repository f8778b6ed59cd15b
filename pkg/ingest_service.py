import json
import logging
from collections import Counter
from pathlib import Path
from typing import Callable, List, Optional

from chain_audit.cache import ResolverCache
from chain_audit.clients import resolve_dataset_aliases
from chain_audit.errors import DuplicateArtifactError
from chain_audit.graph import (
    ArtifactKind,
    DatasetIndex,
    ModelIndex,
    build_supply_chain_graph,
    enumerate_chains,
    filter_by_engagement,
    lineage_disclosure_stats,
    load_snapshot,
    prune_incomplete_chains,
    resolve_base_lineage,
    write_graph,
)
from chain_audit.usage import load_signatures

logger = logging.getLogger(__name__)


class IngestService:
    """
    Stage 1: snapshots → pruned dataset/model/application graph.

    Writes the graph to ``graph_path`` and ``ingest_report.json`` next to it.
    """

    def run(self, snapshots: List[Path], graph_path: Path, min_likes=1, min_stars=1, signature_file=None,
            validate_usage=True, resolver_cache: Optional[ResolverCache] = None,
            dataset_resolver: Optional[Callable[[str], Optional[str]]] = None):
        graph_path = Path(graph_path)
        graph_path.parent.mkdir(parents=True, exist_ok=True)
        report = {"snapshots": {}}

        records = []
        for path in snapshots:
            snapshot = load_snapshot(path)
            report["snapshots"][Path(path).name] = {"records": len(snapshot), "malformed_lines": snapshot.skipped}
            records.extend(snapshot.records)

        counts = Counter((r.platform.value, r.kind.value, r.id) for r in records)
        for (platform, kind, artifact_id), n in sorted(counts.items()):
            if n > 1:
                raise DuplicateArtifactError(platform, kind, artifact_id)

        datasets = [r for r in records if r.kind == ArtifactKind.DATASET]
        all_models = [r for r in records if r.kind == ArtifactKind.MODEL]
        applications = [r for r in records if r.kind == ArtifactKind.APPLICATION]
        models = filter_by_engagement(all_models, min_likes)
        applications = filter_by_engagement(applications, min_stars)
        logger.info(
            f"[Ingest] {len(datasets)} datasets, {len(models)}/{len(all_models)} models with >= {min_likes} likes, "
            f"{len(applications)} applications with >= {min_stars} stars"
        )

        lineage = resolve_base_lineage(models, ModelIndex(all_models))
        logger.info(f"[Ingest] Lineage closure adds {len(lineage.models) - len(models)} base models")

        cache = resolver_cache if resolver_cache is not None else ResolverCache()
        aliases = {ref: hit for ref, hit in cache.items_with_prefix("dataset:").items() if hit}
        if dataset_resolver is not None:
            index = DatasetIndex(datasets, aliases)
            pending = [ref for m in lineage.models for ref in m.metadata_dataset_refs if index(ref.strip()) is None]
            aliases.update(resolve_dataset_aliases(pending, dataset_resolver, cache))
        signatures = load_signatures(signature_file) if validate_usage else None
        graph, build = build_supply_chain_graph(
            datasets, lineage.models, applications, DatasetIndex(datasets, aliases),
            signatures=signatures, validate_usage=validate_usage,
        )
        pruned = prune_incomplete_chains(graph)

        chains = enumerate_chains(pruned)
        write_graph(pruned, graph_path)

        disclosure = lineage_disclosure_stats(all_models)
        report.update({
            "engagement": {"min_likes": min_likes, "min_stars": min_stars,
                           "models_kept": len(models), "applications_kept": len(applications)},
            "lineage": {
                "models_after_closure": len(lineage.models),
                "dangling": [list(p) for p in lineage.dangling],
                "cycles": lineage.cycles,
            },
            "build": build.to_json(),
            "pruned": {kind.value: len(pruned.ids(kind)) for kind in ArtifactKind},
            "unpruned": {kind.value: len(graph.ids(kind)) for kind in ArtifactKind},
            "chains": len(chains),
            "disclosure": disclosure.rows(),
        })
        with open(graph_path.parent / "ingest_report.json", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"[Ingest] {len(chains)} complete supply chains written to {graph_path}")
        return pruned, report
