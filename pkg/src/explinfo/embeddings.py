"""Text embedding providers and a persistent byte-exact cache.

Providers turn texts into fixed-dimensional float32 vectors; the cache is
an append-only binary container keyed by content digests so that a rerun
replays stored vectors byte-identically without contacting any provider.
The offline provider expands a seeded hash of the text into a unit-norm
pseudorandom vector, which keeps CI hermetic.
"""

from __future__ import annotations

import hashlib
import math
import struct
import threading
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EmbeddingError(ValueError):
    pass


class TransportError(RuntimeError):
    """Network-level failure after retries were exhausted."""


class ProviderResponseError(RuntimeError):
    """The provider answered, but with the wrong shape or count."""


class CacheCorruptionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    provider: str
    model: str

    def __post_init__(self):
        if self.values.ndim != 1 or self.values.shape[0] < 1:
            raise EmbeddingError("embedding must be a non-empty vector")
        if not np.all(np.isfinite(self.values)):
            raise EmbeddingError("embedding contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def make_key(namespace: str, *parts: str) -> bytes:
    """32-byte cache key hashing the namespace and each part with length
    framing, so no two part lists collide by concatenation."""
    h = hashlib.sha256()
    for piece in (namespace, *parts):
        raw = piece.encode("utf-8")
        h.update(len(raw).to_bytes(8, "little"))
        h.update(raw)
    return h.digest()


_MAGIC = b"XPLCACHE1\n"
_HEADER = struct.Struct("<32s32sI")  # key digest, payload digest, payload length


class BytesStore:
    """Append-only keyed byte store with a rebuildable text index sidecar.

    Record layout after the magic line: 32-byte key digest, 32-byte
    payload sha256, little-endian uint32 length, payload. Writes are
    serialized through a lock; the newest record for a key wins, so a
    corrupted entry is superseded by appending a fresh one.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.index_path = self.path.with_suffix(self.path.suffix + ".idx")
        self._lock = threading.Lock()
        self._index: dict = {}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists():
            self.path.write_bytes(_MAGIC)
        self._load_index()

    def _load_index(self):
        if self._load_sidecar():
            return
        self._scan()
        self._write_sidecar()

    def _load_sidecar(self) -> bool:
        if not self.index_path.exists():
            return False
        size = self.path.stat().st_size
        index = {}
        covered = len(_MAGIC)
        try:
            for line in self.index_path.read_text(encoding="ascii").splitlines():
                hexkey, offset, length = line.split()
                offset, length = int(offset), int(length)
                end = offset + _HEADER.size + length
                if end > size:
                    return False
                index[bytes.fromhex(hexkey)] = (offset, length)
                covered = max(covered, end)
        except (ValueError, UnicodeDecodeError):
            return False
        if covered != size:
            return False  # stale sidecar; rescan instead
        self._index = index
        return True

    def _scan(self):
        self._index = {}
        with self.path.open("rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise CacheCorruptionError(f"{self.path}: bad magic header")
            offset = fh.tell()
            while True:
                header = fh.read(_HEADER.size)
                if not header:
                    break
                if len(header) < _HEADER.size:
                    warnings.warn(f"{self.path}: truncated record at offset {offset}; ignoring tail", stacklevel=2)
                    break
                key, _, length = _HEADER.unpack(header)
                payload = fh.read(length)
                if len(payload) < length:
                    warnings.warn(f"{self.path}: truncated record at offset {offset}; ignoring tail", stacklevel=2)
                    break
                self._index[key] = (offset, length)
                offset = fh.tell()

    def _write_sidecar(self):
        lines = [f"{key.hex()} {offset} {length}" for key, (offset, length) in self._index.items()]
        self.index_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")

    def __contains__(self, key: bytes) -> bool:
        return key in self._index

    def get(self, key: bytes):
        """Payload bytes for the key, or None on a miss. A digest
        mismatch raises so the caller can refetch and supersede."""
        entry = self._index.get(key)
        if entry is None:
            return None
        offset, length = entry
        with self.path.open("rb") as fh:
            fh.seek(offset)
            header = fh.read(_HEADER.size)
            stored_key, digest, stored_len = _HEADER.unpack(header)
            payload = fh.read(stored_len)
        if stored_key != key or stored_len != length or hashlib.sha256(payload).digest() != digest:
            raise CacheCorruptionError(f"{self.path}: digest mismatch for key {key.hex()[:12]}")
        return payload

    def put(self, key: bytes, payload: bytes):
        record = _HEADER.pack(key, hashlib.sha256(payload).digest(), len(payload)) + payload
        with self._lock:
            with self.path.open("ab") as fh:
                offset = fh.tell()
                fh.write(record)
            self._index[key] = (offset, len(payload))
            with self.index_path.open("a", encoding="ascii") as fh:
                fh.write(f"{key.hex()} {offset} {len(payload)}\n")

    def __len__(self) -> int:
        return len(self._index)


class HashEmbeddingProvider:
    """Offline deterministic provider: sha256 of (seed, text) expanded in
    counter mode to uniforms, turned Gaussian by Box-Muller, then
    unit-normalized. Same text, same vector — on any machine."""

    name = "hash"

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise EmbeddingError("dimension must be positive")
        self.dim = dim
        self.seed = seed
        self.model = f"hash-d{dim}-s{seed}"
        self.call_count = 0

    def _uniforms(self, text: str, count: int):
        root = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
        out = []
        counter = 0
        while len(out) < count:
            block = hashlib.sha256(root + counter.to_bytes(8, "little")).digest()
            for i in range(0, 32, 8):
                word = int.from_bytes(block[i : i + 8], "little")
                out.append(((word >> 11) + 0.5) * 2.0**-53)  # in (0, 1)
            counter += 1
        return out[:count]

    def embed(self, texts):
        self.call_count += 1
        vectors = []
        pairs = (self.dim + 1) // 2
        for text in texts:
            u = self._uniforms(text, 2 * pairs)
            coords = []
            for i in range(pairs):
                r = math.sqrt(-2.0 * math.log(u[2 * i]))
                theta = 2.0 * math.pi * u[2 * i + 1]
                coords.append(r * math.cos(theta))
                coords.append(r * math.sin(theta))
            vec = np.asarray(coords[: self.dim], dtype=np.float64)
            vec /= math.sqrt(float(np.dot(vec, vec)))
            vectors.append(vec.astype(np.float32))
        return vectors


class RemoteEmbeddingProvider:
    """Adapter for an HTTPS embedding endpoint: POST {model, input:
    [texts]}, response {data: [{embedding: [...]}, ...]} in input order.

    ``post`` is injectable for tests; the default uses requests. Retries
    transport failures with exponential backoff before giving up.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        post=None,
        sleep=time.sleep,
    ):
        self.name = "remote"
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._post = post if post is not None else self._requests_post
        self._sleep = sleep
        self.call_count = 0

    def _requests_post(self, url, payload):
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise ProviderResponseError(f"status {response.status_code}: {response.text[:200]}")
        return response.json()

    def embed(self, texts):
        self.call_count += 1
        url = f"{self.base_url}/embeddings"
        payload = {"model": self.model, "input": list(texts)}
        last_error = None
        for attempt in range(self.max_retries):
            try:
                body = self._post(url, payload)
                break
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff * 2**attempt)
        else:
            raise TransportError(f"giving up after {self.max_retries} attempts: {last_error}")
        try:
            rows = body["data"]
            vectors = [np.asarray(row["embedding"], dtype=np.float32) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderResponseError(f"malformed response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderResponseError(f"asked for {len(texts)} embeddings, got {len(vectors)}")
        return vectors


def embed_batch(provider, texts) -> list:
    """One vector per text, order preserved, all sharing one dimension."""
    texts = list(texts)
    if not texts:
        raise EmbeddingError("no texts to embed")
    vectors = provider.embed(texts)
    if len(vectors) != len(texts):
        raise ProviderResponseError(f"provider returned {len(vectors)} vectors for {len(texts)} texts")
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise ProviderResponseError(f"inconsistent dimensions in one batch: {sorted(dims)}")
    return [EmbeddingVector(values=v, provider=provider.name, model=provider.model) for v in vectors]


def _cache_key(provider, text: str) -> bytes:
    text_digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return make_key("emb", provider.name, provider.model, text_digest)


def _decode(payload: bytes, provider) -> EmbeddingVector:
    values = np.frombuffer(payload, dtype="<f4").copy()
    return EmbeddingVector(values=values, provider=provider.name, model=provider.model)


def cached_embed(provider, text: str, store: BytesStore) -> EmbeddingVector:
    """Fetch-once semantics: a hit replays stored bytes without touching
    the provider; a corrupted entry is reported, refetched, and
    superseded by a fresh record."""
    key = _cache_key(provider, text)
    try:
        payload = store.get(key)
    except CacheCorruptionError as exc:
        warnings.warn(f"cache entry unreadable, refetching: {exc}", stacklevel=2)
        payload = None
    if payload is None:
        vector = embed_batch(provider, [text])[0]
        store.put(key, vector.values.astype("<f4").tobytes())
        return vector
    return _decode(payload, provider)


def embed_texts_cached(provider, texts, store: BytesStore, batch_size: int = 64) -> list:
    """Embed many texts through the cache, fetching only the misses in
    batches. Order-preserving; duplicate texts cost one fetch."""
    texts = list(texts)
    if not texts:
        raise EmbeddingError("no texts to embed")
    out: list = [None] * len(texts)
    misses: dict = {}
    for i, text in enumerate(texts):
        key = _cache_key(provider, text)
        try:
            payload = store.get(key)
        except CacheCorruptionError as exc:
            warnings.warn(f"cache entry unreadable, refetching: {exc}", stacklevel=2)
            payload = None
        if payload is None:
            misses.setdefault(text, []).append(i)
        else:
            out[i] = _decode(payload, provider)
    pending = list(misses)
    for start in range(0, len(pending), batch_size):
        chunk = pending[start : start + batch_size]
        for text, vector in zip(chunk, embed_batch(provider, chunk)):
            store.put(_cache_key(provider, text), vector.values.astype("<f4").tobytes())
            for i in misses[text]:
                out[i] = vector
    return out
