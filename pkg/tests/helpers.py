from pathlib import Path
from typing import Dict, Optional, Sequence

from chain_audit.config import DEFAULT_TEMPLATE_DIR
from chain_audit.graph import ArtifactKind, ArtifactRecord, Platform
from chain_audit.retrieval import RetrievedFile, classify_path

FIXTURES = Path(__file__).parent / "fixtures"
SNAPSHOTS = [FIXTURES / "snapshots" / "hub.jsonl", FIXTURES / "snapshots" / "forge.jsonl"]
REPOS = FIXTURES / "repos"


def dataset(artifact_id: str, license: Optional[str] = "mit", likes: int = 1, followers=None) -> ArtifactRecord:
    return ArtifactRecord(artifact_id, ArtifactKind.DATASET, Platform.HUB, license, likes,
                          artifact_id.split("/")[0], followers)


def model(artifact_id: str, datasets: Sequence[str] = (), base: Optional[str] = None,
          license: Optional[str] = "mit", likes: int = 1, followers=None) -> ArtifactRecord:
    return ArtifactRecord(artifact_id, ArtifactKind.MODEL, Platform.HUB, license, likes,
                          artifact_id.split("/")[0], followers, tuple(datasets), base)


def app(artifact_id: str, models: Sequence[str] = (), sources: Optional[Dict[str, str]] = None,
        license: Optional[str] = "mit", stars: int = 1) -> ArtifactRecord:
    if sources is None:
        sources = {"app.py": "\n".join(f'AutoModel.from_pretrained("{m}")' for m in models)}
    return ArtifactRecord(artifact_id, ArtifactKind.APPLICATION, Platform.FORGE, license, stars,
                          artifact_id.split("/")[0], None, candidate_models=tuple(models),
                          sources=tuple(sorted(sources.items())))


def retrieved(path: str, content: str, artifact_id: str = "org/repo") -> RetrievedFile:
    return RetrievedFile(artifact_id, path, classify_path(path), len(content.encode()), content)


def template_text(spdx_id: str) -> str:
    return (DEFAULT_TEMPLATE_DIR / f"{spdx_id}.txt").read_text(encoding="utf-8")


def mit_license(holder_line: str = "Copyright (c) 2022 Acme Corp") -> str:
    return template_text("MIT").replace("Copyright (c) <year> <copyright holders>", holder_line)


def random_population(rng, n_datasets=6, n_models=12, n_apps=8):
    """Datasets, models (bases always point at earlier models) and apps with random links."""
    datasets = [dataset(f"d/{i}") for i in range(n_datasets)]
    models = []
    for i in range(n_models):
        refs = rng.sample([d.id for d in datasets] + ["ghost/set"], rng.randint(0, 2))
        base = f"m/{rng.randrange(i)}" if i and rng.random() < 0.5 else None
        models.append(model(f"m/{i}", refs, base))
    apps = [app(f"a/{i}", rng.sample([m.id for m in models], rng.randint(0, 3))) for i in range(n_apps)]
    return datasets, models, apps
