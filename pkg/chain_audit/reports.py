import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from chain_audit.audit import AttributionSlice, IntegrityRow, PayloadGapRow, SliceResult

logger = logging.getLogger(__name__)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def write_table(rows: List[dict], out_dir, name: str, columns: Optional[Sequence[str]] = None,
                decimals: int = 1, integer_columns: Sequence[str] = ()) -> List[Path]:
    """
    Write ``<name>.csv`` and ``<name>.json``.

    The CSV rounds ``*_pct`` columns (and ``rate``) to ``decimals`` places for
    display; the JSON keeps raw values. ``integer_columns`` may hold missing
    values and are written as nullable integers.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows, columns=list(columns) if columns else None)
    for col in integer_columns:
        df[col] = df[col].astype("Int64")

    display = df.copy()
    for col in display.columns:
        if col.endswith("_pct") or col == "rate":
            display[col] = pd.to_numeric(display[col], errors="coerce").round(decimals)
    csv_path = out_dir / f"{name}.csv"
    display.to_csv(csv_path, index=False, lineterminator="\n", na_rep="N/A")

    json_path = out_dir / f"{name}.json"
    write_json(json.loads(df.to_json(orient="records", double_precision=10)), json_path)
    return [csv_path, json_path]


def slice_rows(results: Sequence[SliceResult]) -> List[dict]:
    rows = []
    for r in results:
        rows.append({
            "slice": r.slice.value,
            "description": r.slice.description,
            "evaluated": r.evaluated,
            "preserved": r.preserved,
            "not_preserved": r.not_preserved,
            "rate": 100.0 * r.rate if r.rate is not None else None,
        })
    return rows


def slice_links(results: Sequence[SliceResult]) -> List[dict]:
    rows = []
    for r in results:
        for link in r.links:
            rows.append({
                "slice": r.slice.value,
                "upstream": ";".join(link.upstream_ids),
                "downstream": link.downstream_id,
                "preserved": link.preserved,
            })
    return rows


def _fmt_pct(value: Optional[float], decimals: int) -> str:
    return "N/A" if value is None else f"{value:.{decimals}f}%"


def _md_table(headers: List[str], rows: List[List[str]]) -> List[str]:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return lines


def render_summary(integrity: Sequence[IntegrityRow], slices: Sequence[SliceResult],
                   gaps: Sequence[PayloadGapRow], subset_counts: Dict[str, int],
                   disclosure: Optional[List[dict]] = None) -> str:
    """Markdown summary of the integrity table, the slice table and the payload gap."""
    lines = ["# Supply chain license audit", ""]
    lines.append(
        "Permissive subset: "
        + ", ".join(f"{subset_counts.get(k, 0)} {k}s" for k in ("dataset", "model", "application"))
    )
    lines += ["", "## License integrity", ""]
    table = []
    for row in integrity:
        d = row.to_dict()
        table.append([
            row.kind, row.total,
            f"{row.license_text} ({_fmt_pct(d['license_text_pct'], 1)})",
            f"{row.copyright} ({_fmt_pct(d['copyright_pct'], 1)})",
            f"{row.compliant} ({_fmt_pct(d['compliant_pct'], 1)})",
        ])
    lines += _md_table(["Artifact", "Total", "License text", "Copyright", "Compliant"], table)

    lines += ["", "## Attribution preservation", ""]
    table = []
    for r in slices:
        table.append([r.slice.value, r.slice.description, r.evaluated, r.preserved, r.not_preserved,
                      _fmt_pct(100.0 * r.rate if r.rate is not None else None, 2)])
    lines += _md_table(["Slice", "Population", "Evaluated", "Preserved", "Not preserved", "Rate"], table)
    for r in slices:
        if r.slice == AttributionSlice.S2_CM_TO_A and r.extras.get("inherited_links"):
            lines += ["", f"S2 excludes {len(r.extras['inherited_links'])} model-application links "
                          f"inherited through base models (see slices_inherited.csv)."]

    lines += ["", "## Missing compliance files", ""]
    table = []
    for g in gaps:
        d = g.to_dict()
        table.append([g.kind, g.total,
                      f"{g.missing_license_file} ({_fmt_pct(d['missing_license_file_pct'], 1)})",
                      f"{g.missing_readme} ({_fmt_pct(d['missing_readme_pct'], 1)})",
                      f"{g.missing_either} ({_fmt_pct(d['missing_either_pct'], 1)})"])
    lines += _md_table(["Artifact", "Total", "Missing LICENSE", "Missing README", "Missing either"], table)

    if disclosure:
        lines += ["", "## Model lineage disclosure", ""]
        lines += _md_table(["Field", "Count", "Share"],
                           [[r["field"], r["count"], _fmt_pct(r["percent"], 1)] for r in disclosure])
    lines.append("")
    return "\n".join(lines)
