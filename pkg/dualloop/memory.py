"""
Agent memory: a bounded short-term context ring and an append-only
long-term experience store with bag-of-words few-shot retrieval.
"""

import json
import logging
import os
import re
import threading
from collections import Counter, deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Deque, Dict, List, Mapping, Optional

from sklearn.feature_extraction import DictVectorizer
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from .exceptions import PersistenceFailure

logger = logging.getLogger(__name__)

SUCCESS = "success"
PROCEDURAL = "procedural"
DECLARATIVE = "declarative"
KINDS = (PROCEDURAL, DECLARATIVE)
SHORT_TERM_CAPACITY = 32

_analyzer = CountVectorizer(lowercase=True, token_pattern=r"(?u)\b\w+\b").build_analyzer()


def make_signature(scenario: str, instruction: str) -> Dict[str, int]:
    """Lowercased, punctuation-free term counts of scenario plus instruction"""
    return dict(sorted(Counter(_analyzer(f"{scenario} {instruction}")).items()))


def similarity(a: Mapping[str, int], b: Mapping[str, int]) -> float:
    if not a or not b:
        return 0.0
    matrix = DictVectorizer().fit_transform([dict(a), dict(b)])
    return float(cosine_similarity(matrix[0:1], matrix[1:2])[0, 0])


@dataclass(frozen=True)
class ExperienceRecord:
    signature: Mapping[str, int]
    plan: str
    outcome: str
    timestamp: int = 0
    role: str = ""
    kind: str = PROCEDURAL
    instruction: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Invalid experience kind: {self.kind}")
        object.__setattr__(self, "signature", dict(sorted(self.signature.items())))

    def to_dict(self):
        return {
            "signature": dict(self.signature),
            "plan": self.plan,
            "outcome": self.outcome,
            "timestamp": self.timestamp,
            "role": self.role,
            "kind": self.kind,
            "instruction": self.instruction,
        }

    @classmethod
    def from_dict(cls, data) -> "ExperienceRecord":
        return cls(
            signature={str(k): int(v) for k, v in data["signature"].items()},
            plan=data["plan"],
            outcome=data["outcome"],
            timestamp=int(data.get("timestamp", 0)),
            role=data.get("role", ""),
            kind=data.get("kind", PROCEDURAL),
            instruction=data.get("instruction", ""),
        )


@dataclass(frozen=True)
class ScoredExperience:
    record: ExperienceRecord
    similarity: float


class MemoryStore:
    """
    One agent's memory. Long-term records are appended (and fsynced when a
    path is set) under a single writer lock; reads take a snapshot.
    """

    def __init__(self, path: Optional[Path] = None, short_term_capacity: int = SHORT_TERM_CAPACITY):
        self.path = Path(path) if path is not None else None
        self.short_term: Deque[str] = deque(maxlen=short_term_capacity)
        self.long_term: List[ExperienceRecord] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.long_term = self.load_records(self.path)

    @staticmethod
    def load_records(path) -> List[ExperienceRecord]:
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(ExperienceRecord.from_dict(json.loads(line)))
        return records

    def remember(self, entry: str):
        self.short_term.append(entry)

    def recent(self, n: Optional[int] = None) -> List[str]:
        items = list(self.short_term)
        return items if n is None else items[-n:]

    def next_timestamp(self) -> int:
        return (self.long_term[-1].timestamp if self.long_term else 0) + 1

    def append(self, record: ExperienceRecord) -> ExperienceRecord:
        with self._lock:
            if record.timestamp <= (self.long_term[-1].timestamp if self.long_term else 0):
                record = replace(record, timestamp=self.next_timestamp())
            if self.path is not None:
                try:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    with open(self.path, "a", encoding="utf-8") as f:
                        f.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
                        f.flush()
                        os.fsync(f.fileno())
                except OSError as e:
                    logger.error("Failed to persist experience to %s: %s", self.path, e)
                    raise PersistenceFailure(f"could not write {self.path}: {e}") from e
            self.long_term.append(record)
        return record

    def search(self, signature: Mapping[str, int], k: int) -> List[ScoredExperience]:
        """Top-k successful records by cosine similarity, newest first on ties"""
        candidates = [r for r in list(self.long_term) if r.outcome == SUCCESS]
        if k <= 0 or not candidates or not signature:
            return []
        matrix = DictVectorizer().fit_transform([dict(signature)] + [dict(r.signature) for r in candidates])
        scores = cosine_similarity(matrix[0:1], matrix[1:]).ravel()
        order = sorted(range(len(candidates)), key=lambda i: (-scores[i], -candidates[i].timestamp))
        return [ScoredExperience(candidates[i], float(scores[i])) for i in order[:k]]


class MemoryBank:
    """Per-role stores (or one shared store), optionally backed by a directory"""

    SHARED = "shared"

    def __init__(self, directory: Optional[Path] = None, shared: bool = False):
        self.directory = Path(directory) if directory is not None else None
        self.shared = shared
        self._stores: Dict[str, MemoryStore] = {}
        self._lock = threading.Lock()

    def store_for(self, role: str) -> MemoryStore:
        key = self.SHARED if self.shared else role
        with self._lock:
            if key not in self._stores:
                path = None
                if self.directory is not None:
                    slug = re.sub(r"[^a-z0-9]+", "_", key.lower()).strip("_") or "agent"
                    path = self.directory / f"{slug}.jsonl"
                self._stores[key] = MemoryStore(path)
            return self._stores[key]

    def stores(self) -> Dict[str, MemoryStore]:
        return dict(self._stores)


def retrieve_experiences(store: MemoryStore, signature: Mapping[str, int], k: int) -> List[ExperienceRecord]:
    return [scored.record for scored in store.search(signature, k)]


def store_experience(store: MemoryStore, record: ExperienceRecord) -> MemoryStore:
    store.append(record)
    return store
