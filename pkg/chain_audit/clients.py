"""
Repository and metadata clients.

``LocalRepositoryClient`` serves repository trees from a directory laid out
as ``<root>/<kind>s/<org>/<name>/``. ``HubClient`` and ``ForgeClient`` talk to
the model hub and the code forge with a bounded request rate and
exponential backoff. ``fetch_live`` turns either into snapshot records and
can be resumed after quota exhaustion. ``resolve_dataset_aliases`` keeps
live answers for raw dataset references in the resolver cache.
"""
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Set

import requests
from huggingface_hub import HfApi
from huggingface_hub.utils import HfHubHTTPError, RepositoryNotFoundError

from chain_audit.errors import AuthError, QuotaExhaustedError, RetriableFetchError
from chain_audit.retrieval import TreeEntry

logger = logging.getLogger(__name__)

KIND_DIRS = {"dataset": "datasets", "model": "models", "application": "applications"}


class LocalRepositoryClient:
    def __init__(self, root):
        self.root = Path(root)

    def repo_dir(self, kind: str, artifact_id: str) -> Path:
        return self.root / KIND_DIRS[kind] / artifact_id

    def tree(self, kind: str, artifact_id: str) -> List[TreeEntry]:
        base = self.repo_dir(kind, artifact_id)
        if not base.is_dir():
            raise FileNotFoundError(f"No repository for {kind} {artifact_id} under {self.root}")
        entries = []
        for dirpath, dirnames, filenames in os.walk(base):
            dirnames.sort()
            for name in sorted(filenames):
                path = Path(dirpath) / name
                entries.append(TreeEntry(path.relative_to(base).as_posix(), path.stat().st_size))
        return entries

    def read(self, kind: str, artifact_id: str, path: str) -> bytes:
        target = (self.repo_dir(kind, artifact_id) / path).resolve()
        if self.repo_dir(kind, artifact_id).resolve() not in target.parents:
            raise FileNotFoundError(f"{path} escapes the repository of {artifact_id}")
        return target.read_bytes()


class RateLimiter:
    """Minimum interval between requests, shared by all threads using the client."""

    def __init__(self, requests_per_second: float):
        self.interval = 1.0 / requests_per_second
        self.lock = threading.Lock()
        self.last = 0.0

    def wait(self):
        with self.lock:
            now = time.monotonic()
            delay = self.last + self.interval - now
            if delay > 0:
                time.sleep(delay)
            self.last = max(now, self.last + self.interval)


def backoff_delay(attempt: int, base: float = 1.0, cap: float = 60.0) -> float:
    return min(cap, base * 2 ** attempt)


def _python_hits(hits: Dict[str, Set[str]]) -> Dict[str, Set[str]]:
    python = {model_id: {p for p in paths if p.endswith(".py")} for model_id, paths in hits.items()}
    return {model_id: paths for model_id, paths in python.items() if paths}


class ForgeClient:
    """Code forge REST client (GitHub API shape)."""

    def __init__(self, endpoint="https://api.github.com", token=None, rate_limit=1.0, max_retries=5,
                 session: Optional[requests.Session] = None, sleep=time.sleep):
        if not token:
            raise AuthError("No forge token set; export CHAINAUDIT_FORGE_TOKEN")
        self.endpoint = endpoint.rstrip("/")
        self.limiter = RateLimiter(rate_limit)
        self.max_retries = max_retries
        self.sleep = sleep
        self.session = session or requests.Session()
        self.session.headers.update({
            "Authorization": f"Bearer {token}",
            "Accept": "application/vnd.github+json",
        })
        self.hits: Dict[str, Dict[str, Set[str]]] = {}
        self.followers: Dict[str, Optional[int]] = {}

    def _get(self, path, params=None, raw=False):
        url = path if path.startswith("http") else f"{self.endpoint}{path}"
        for attempt in range(self.max_retries + 1):
            self.limiter.wait()
            resp = self.session.get(url, params=params, timeout=30)
            if resp.status_code == 404:
                return None
            if resp.status_code == 401:
                raise AuthError(f"Forge rejected the token ({url})")
            if resp.status_code in (403, 429) and resp.headers.get("X-RateLimit-Remaining") == "0":
                reset = resp.headers.get("X-RateLimit-Reset")
                raise QuotaExhaustedError("Forge API quota exhausted", reset_at=int(reset) if reset else None)
            if resp.status_code in (403, 429) or resp.status_code >= 500:
                delay = backoff_delay(attempt)
                logger.warning(f"[Forge] {resp.status_code} from {url}, retrying in {delay:.0f}s")
                self.sleep(delay)
                continue
            resp.raise_for_status()
            return resp.content if raw else resp.json()
        raise RetriableFetchError(f"Giving up on {url} after {self.max_retries} retries")

    def discover(self, model_ids: Iterable[str]) -> List[str]:
        """
        Search all files for each model id. Every hit is kept for the extension
        histogram; only repositories with a hit in a ``.py`` file are returned.
        """
        for model_id in sorted(set(model_ids)):
            page = 1
            while True:
                result = self._get("/search/code", params={
                    "q": f'"{model_id}"', "per_page": 100, "page": page,
                })
                items = (result or {}).get("items", [])
                for item in items:
                    repo = item["repository"]["full_name"]
                    self.hits.setdefault(repo, {}).setdefault(model_id, set()).add(item["path"])
                if len(items) < 100:
                    break
                page += 1
        return sorted(repo for repo, hits in self.hits.items() if _python_hits(hits))

    def hit_listing(self) -> List[dict]:
        """Every code search hit as ``{"id", "path"}`` rows, the tree-listing format."""
        return [{"id": repo, "path": path}
                for repo in sorted(self.hits)
                for path in sorted({p for paths in self.hits[repo].values() for p in paths})]

    def _owner_followers(self, owner: str) -> Optional[int]:
        if owner not in self.followers:
            info = self._get(f"/users/{owner}")
            self.followers[owner] = info.get("followers") if info else None
        return self.followers[owner]

    def record(self, kind: str, artifact_id: str) -> Optional[dict]:
        repo = self._get(f"/repos/{artifact_id}")
        if repo is None:
            return None
        branch = repo.get("default_branch", "main")
        hits = _python_hits(self.hits.get(artifact_id, {}))
        sources = {}
        for path in sorted({p for paths in hits.values() for p in paths}):
            try:
                sources[path] = self.read(kind, artifact_id, path, branch=branch).decode("utf-8", errors="replace")
            except FileNotFoundError:
                logger.warning(f"[Forge] {artifact_id}:{path} vanished since the code search")
        license_info = repo.get("license") or {}
        owner = repo["owner"]["login"]
        return {
            "id": repo["full_name"],
            "kind": "application",
            "platform": "forge",
            "license": license_info.get("spdx_id"),
            "engagement": repo.get("stargazers_count", 0),
            "organization": owner,
            "followers": self._owner_followers(owner),
            "models": sorted(hits),
            "sources": sources,
        }

    def tree(self, kind: str, artifact_id: str) -> List[TreeEntry]:
        repo = self._get(f"/repos/{artifact_id}")
        if repo is None:
            raise FileNotFoundError(artifact_id)
        listing = self._get(f"/repos/{artifact_id}/git/trees/{repo.get('default_branch', 'main')}",
                            params={"recursive": 1})
        return [TreeEntry(e["path"], e.get("size")) for e in (listing or {}).get("tree", []) if e["type"] == "blob"]

    def read(self, kind: str, artifact_id: str, path: str, branch: str = "HEAD") -> Optional[bytes]:
        data = self._get(f"https://raw.githubusercontent.com/{artifact_id}/{branch}/{path}", raw=True)
        if data is None:
            raise FileNotFoundError(f"{artifact_id}:{path}")
        return data


class HubClient:
    """Model hub client built on ``huggingface_hub.HfApi`` plus plain HTTP for org pages and raw files."""

    def __init__(self, endpoint="https://huggingface.co", token=None, rate_limit=1.0, max_retries=5,
                 api: Optional[HfApi] = None, session: Optional[requests.Session] = None, sleep=time.sleep):
        self.endpoint = endpoint.rstrip("/")
        self.api = api or HfApi(endpoint=self.endpoint, token=token)
        self.session = session or requests.Session()
        if token:
            self.session.headers["Authorization"] = f"Bearer {token}"
        self.limiter = RateLimiter(rate_limit)
        self.max_retries = max_retries
        self.sleep = sleep
        self.followers: Dict[str, Optional[int]] = {}

    def _call(self, fn, *args, **kwargs):
        for attempt in range(self.max_retries + 1):
            self.limiter.wait()
            try:
                return fn(*args, **kwargs)
            except RepositoryNotFoundError:
                return None
            except HfHubHTTPError as e:
                status = e.response.status_code if e.response is not None else None
                if status == 401:
                    raise AuthError(f"Hub rejected the token: {e}") from e
                if status == 429 or (status is not None and status >= 500):
                    delay = backoff_delay(attempt)
                    logger.warning(f"[Hub] {status}, retrying in {delay:.0f}s")
                    self.sleep(delay)
                    continue
                if status == 404:
                    return None
                raise
        raise QuotaExhaustedError(f"Hub kept throttling after {self.max_retries} retries")

    def _info(self, kind: str, artifact_id: str):
        if kind == "dataset":
            return self._call(self.api.dataset_info, artifact_id, files_metadata=True)
        return self._call(self.api.model_info, artifact_id, files_metadata=True)

    def _org_followers(self, org: str) -> Optional[int]:
        if org not in self.followers:
            count = None
            for scope in ("organizations", "users"):
                self.limiter.wait()
                resp = self.session.get(f"{self.endpoint}/api/{scope}/{org}/overview", timeout=30)
                if resp.status_code == 200:
                    count = resp.json().get("numFollowers")
                    break
            self.followers[org] = count
        return self.followers[org]

    def record(self, kind: str, artifact_id: str) -> Optional[dict]:
        info = self._info(kind, artifact_id)
        if info is None:
            return None
        card = info.card_data.to_dict() if getattr(info, "card_data", None) else {}
        org = info.author or (artifact_id.split("/", 1)[0] if "/" in artifact_id else None)
        record = {
            "id": info.id,
            "kind": kind,
            "platform": "hub",
            "license": card.get("license"),
            "engagement": info.likes or 0,
            "organization": org,
            "followers": self._org_followers(org) if org else None,
        }
        if kind == "model":
            record["datasets"] = card.get("datasets") or []
            record["base_model"] = card.get("base_model")
        return record

    def resolve_dataset(self, ref: str) -> Optional[str]:
        """Fully-qualified id of a raw dataset reference, or None."""
        info = self._call(self.api.dataset_info, ref)
        if info is not None:
            return info.id
        if "/" in ref:
            return None
        found = self._call(lambda: list(self.api.list_datasets(search=ref, limit=100))) or []
        exact = sorted({d.id for d in found if d.id.rsplit("/", 1)[-1].lower() == ref.lower()})
        return exact[0] if len(exact) == 1 else None

    def tree(self, kind: str, artifact_id: str) -> List[TreeEntry]:
        info = self._info(kind, artifact_id)
        if info is None:
            raise FileNotFoundError(artifact_id)
        return [TreeEntry(s.rfilename, s.size) for s in (info.siblings or [])]

    def read(self, kind: str, artifact_id: str, path: str) -> bytes:
        prefix = "datasets/" if kind == "dataset" else ""
        url = f"{self.endpoint}/{prefix}{artifact_id}/resolve/main/{path}"
        for attempt in range(self.max_retries + 1):
            self.limiter.wait()
            resp = self.session.get(url, timeout=60)
            if resp.status_code == 404:
                raise FileNotFoundError(f"{artifact_id}:{path}")
            if resp.status_code == 429 or resp.status_code >= 500:
                self.sleep(backoff_delay(attempt))
                continue
            resp.raise_for_status()
            return resp.content
        raise RetriableFetchError(f"Giving up on {url} after {self.max_retries} retries")


@dataclass
class LiveFetchReport:
    requested: int = 0
    fetched: List[str] = field(default_factory=list)
    cached: int = 0
    unresolved: List[str] = field(default_factory=list)
    written: int = 0


def fetch_live(platform: str, kind: str, ids: Iterable[str], client, cache, out_path) -> LiveFetchReport:
    """
    Fetch snapshot records for ``ids``, skipping those already in ``cache``.

    Records are kept in the resolver cache as they arrive, so a run that stops
    on a quota or auth error resumes where it left off. Unknown ids are kept
    as unresolved. The snapshot fragment at ``out_path`` holds every resolved
    requested id, sorted, whatever order they were fetched in.

    Raises:
        RetriableFetchError: quota exhaustion or an auth failure; progress is
            flushed before the error propagates.
    """
    ids = sorted(set(i.strip() for i in ids if i and i.strip()))
    report = LiveFetchReport(requested=len(ids))
    try:
        for artifact_id in ids:
            key = f"{platform}:{kind}:{artifact_id}"
            if key in cache:
                report.cached += 1
                continue
            record = client.record(kind, artifact_id)
            report.fetched.append(artifact_id)
            if record is None:
                logger.warning(f"[Live] {platform} {kind} {artifact_id} not found")
            cache.set(key, record if record is not None else {"unresolved": True})
    finally:
        cache.flush()

    records = []
    for artifact_id in ids:
        entry = cache.get(f"{platform}:{kind}:{artifact_id}")
        if not entry or entry.get("unresolved"):
            report.unresolved.append(artifact_id)
        else:
            records.append(entry)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for record in sorted(records, key=lambda r: r["id"]):
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    report.written = len(records)
    return report


def resolve_dataset_aliases(refs: Iterable[str], resolver: Callable[[str], Optional[str]], cache) -> Dict[str, str]:
    """
    Resolve raw dataset references through ``resolver`` and keep the answers,
    misses included, in ``cache`` under ``dataset:<raw ref>``.

    Returns every cached alias among ``refs`` that resolved.
    """
    refs = sorted(set(r.strip() for r in refs if r and r.strip()))
    asked = 0
    try:
        for ref in refs:
            key = f"dataset:{ref}"
            if key in cache:
                continue
            cache.set(key, resolver(ref))
            asked += 1
    finally:
        cache.flush()
    aliases = {ref: cache.get(f"dataset:{ref}") for ref in refs}
    aliases = {ref: hit for ref, hit in aliases.items() if hit}
    logger.info(f"[Live] {len(aliases)}/{len(refs)} dataset refs resolved ({asked} looked up)")
    return aliases


class KindRouter:
    """Serves applications from the forge client and datasets/models from the hub client."""

    def __init__(self, hub, forge):
        self.hub = hub
        self.forge = forge

    def _client(self, kind: str):
        return self.forge if kind == "application" else self.hub

    def tree(self, kind: str, artifact_id: str) -> List[TreeEntry]:
        return self._client(kind).tree(kind, artifact_id)

    def read(self, kind: str, artifact_id: str, path: str) -> bytes:
        return self._client(kind).read(kind, artifact_id, path)
