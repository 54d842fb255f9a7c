"""The HCLS expert-finder scenario: shipped bundle, generator, topology.

The shipped bundle (``data/hcls``, also reachable as ``usecase/`` at the
repository root) holds one organizational agent, ``hcls_org``, and three
source agents: ``pubmed_agent`` (publications), ``patent_agent`` (patents)
and ``kb_agent`` (therapeutic-target knowledge).  Publication counts are
synthetic; william_klein has 5 ADDLs papers against 3 and 2 for the others.
"""

from __future__ import annotations

import csv
import random
import shutil
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from .agents import AgentConfig, Client, connect, load_agent, load_config
from .broker import BrokerConfig, start

BUNDLE_DIR = Path(__file__).parent / "data" / "hcls"
CONFIG_FILES = {
    "hcls_org": "hcls_org.json",
    "pubmed_agent": "pubmed.json",
    "patent_agent": "patent.json",
    "kb_agent": "kb_agent.json",
}
ORG_AGENT = "hcls_org"
_STATIC_FILES = (
    "hcls_org.rr", "pubmed.rr", "patent.rr", "kb.rr", "kb.json", "responsibility.json",
    *CONFIG_FILES.values(),
)


@dataclass
class UseCaseBundle:
    root: Path
    configs: dict[str, AgentConfig]
    publications: list[dict]
    patents: list[dict]

    @property
    def fields(self) -> list[str]:
        return sorted({p["field"] for p in self.publications})

    @property
    def authors(self) -> list[str]:
        return sorted({p["author"] for p in self.publications})


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def load_bundle(root: Path | str = BUNDLE_DIR) -> UseCaseBundle:
    root = Path(root)
    configs = {name: load_config(root / fn) for name, fn in CONFIG_FILES.items()}
    return UseCaseBundle(
        root,
        configs,
        _read_csv(root / "publications.csv"),
        _read_csv(root / "patents.csv"),
    )


def generate_bundle(
    dest: Path | str,
    seed: int = 0,
    n_authors: int = 100,
    n_publications: int = 1000,
    n_fields: int = 8,
    n_locations: int = 12,
) -> Path:
    """Write a bundle with seeded synthetic publications and patents.

    Rule bases, configs and the knowledge base are copied from the shipped
    bundle; only the two csv datasets are regenerated.
    """
    rng = random.Random(seed)
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for fn in _STATIC_FILES:
        shutil.copyfile(BUNDLE_DIR / fn, dest / fn)
    authors = [f"author_{i:03d}" for i in range(n_authors)]
    fields = ["ADDLs"] + [f"field_{i}" for i in range(1, n_fields)]
    locations = [f"city_{i:02d}" for i in range(n_locations)]
    home = {a: rng.choice(locations) for a in authors}
    # a skewed author distribution makes strict maxima (and some ties) likely
    weights = [1.0 / (1 + i) ** 0.8 for i in range(n_authors)]
    with open(dest / "publications.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["author", "title", "field", "location", "year"])
        for i in range(n_publications):
            a = rng.choices(authors, weights)[0]
            loc = home[a] if rng.random() < 0.8 else rng.choice(locations)
            w.writerow([a, f"paper_{i:04d}", rng.choice(fields), loc, rng.randint(1995, 2010)])
    with open(dest / "patents.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["holder", "patent_id", "field"])
        for i in range(n_authors * 3 // 2):
            a = rng.choices(authors, weights)[0]
            w.writerow([a, f"pat_{i:04d}", rng.choice(fields)])
    return dest


@contextmanager
def topology(
    root: Path | str = BUNDLE_DIR,
    transport: str = "tcp",
    timeout_ms: int = 5000,
    trace_file=None,
):
    """Run a broker plus every agent of a bundle in this process.

    Yields ``(broker, agents)``; agents are keyed by name.  With
    ``transport="tcp"`` everything talks over loopback sockets.
    """
    bundle = load_bundle(root)
    listen = "127.0.0.1:0" if transport == "tcp" else None
    broker = start(BrokerConfig(listen=listen, timeout_ms=timeout_ms), trace_file)
    agents = {}
    try:
        for name, cfg in bundle.configs.items():
            if transport == "tcp":
                agents[name] = load_agent(cfg, address=broker.address_text)
            else:
                agents[name] = load_agent(cfg, broker=broker)
        yield broker, agents
    finally:
        for agent in agents.values():
            agent.stop()
        broker.stop()


def client_for(broker, transport: str = "tcp", name: str | None = None) -> Client:
    if transport == "tcp":
        return Client(connect(broker.address_text), name)
    return Client(connect(broker=broker), name)
