"""k-hop candidate neighborhoods, exact or approximated with random walks.

The exact structure is the sign of ``A^k + A^(k-1)`` with the diagonal
dropped, ``A`` being the boolean entity adjacency of the train graph
(symmetrized by default, ``A^0`` the identity). The walk approximation
launches ``omega`` length-``k`` walks from every entity and keeps visit
counts, which later act as sampling weights.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, NeighborhoodFormatError, ResourceLimitError
from .graph import TripleStore

MAGIC = b"SANSKHOP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHBIIQQ")

DEFAULT_MAX_ENTRIES = 2_000_000_000


class Kind(IntEnum):
    EXACT = 0
    WALKS = 1


@dataclass(eq=False)
class KHopNeighborhood:
    """Per-entity candidate rows stored CSR-style.

    ``members[indptr[e]:indptr[e + 1]]`` is the sorted row of entity ``e``;
    ``counts`` holds the matching visit counts for walk-built rows and is
    ``None`` for exact rows.
    """

    kind: Kind
    k: int
    indptr: np.ndarray
    members: np.ndarray
    counts: Optional[np.ndarray] = None
    omega: int = 0
    seed: int = 0

    @property
    def num_entities(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def row_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row(self, e: int):
        """Sorted member ids, or ``(id, count)`` pairs for walk rows."""
        lo, hi = self.indptr[e], self.indptr[e + 1]
        ids = self.members[lo:hi].tolist()
        if self.counts is None:
            return ids
        return list(zip(ids, self.counts[lo:hi].tolist()))

    def row_members(self, e: int) -> np.ndarray:
        return self.members[self.indptr[e] : self.indptr[e + 1]]

    def row_counts(self, e: int) -> np.ndarray:
        if self.counts is None:
            return np.ones(self.indptr[e + 1] - self.indptr[e], dtype=np.int64)
        return self.counts[self.indptr[e] : self.indptr[e + 1]]

    def member_mask(self, anchors, candidates) -> np.ndarray:
        """Whether each candidate lies in its anchor's row (broadcasting)."""
        anchors = np.asarray(anchors, dtype=np.int64)
        candidates = np.asarray(candidates, dtype=np.int64)
        n = self.num_entities
        keys = getattr(self, "_keys", None)
        if keys is None:
            rows = np.repeat(np.arange(n, dtype=np.int64), self.row_sizes())
            keys = self._keys = rows * n + self.members
        query = anchors * n + candidates
        if len(keys) == 0:
            return np.zeros(np.broadcast(anchors, candidates).shape, dtype=bool)
        pos = np.minimum(np.searchsorted(keys, query), len(keys) - 1)
        return keys[pos] == query

    def to_sparse(self) -> sp.csr_matrix:
        n = self.num_entities
        data = np.ones(self.nnz, dtype=np.int64) if self.counts is None else self.counts
        return sp.csr_matrix((data, self.members, self.indptr), shape=(n, n))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KHopNeighborhood):
            return NotImplemented
        if (self.counts is None) != (other.counts is None):
            return False
        return (
            self.kind == other.kind
            and self.k == other.k
            and self.omega == other.omega
            and self.seed == other.seed
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.members, other.members)
            and (self.counts is None or np.array_equal(self.counts, other.counts))
        )


@dataclass(frozen=True)
class FillReport:
    k: int
    filled_fraction: float

    @property
    def percent(self) -> float:
        return 100.0 * self.filled_fraction


def _check_k(k) -> int:
    if int(k) != k or k < 1:
        raise ContractViolation(f"k must be a positive integer, got {k!r}")
    return int(k)


def _from_sparse(mat: sp.csr_matrix, kind: Kind, k: int, **kw) -> KHopNeighborhood:
    mat = mat.tocsr()
    mat.sort_indices()
    counts = mat.data.astype(np.int64) if kind is Kind.WALKS else None
    return KHopNeighborhood(
        kind, k, mat.indptr.astype(np.int64), mat.indices.astype(np.int64), counts, **kw
    )


def _sign(mat: sp.csr_matrix) -> sp.csr_matrix:
    mat.eliminate_zeros()
    mat.data[:] = 1
    return mat


def _exact_block(adj: sp.csr_matrix, rows: np.ndarray, k: int) -> sp.csr_matrix:
    n = adj.shape[0]
    m = len(rows)
    prev = sp.csr_matrix((np.ones(m, dtype=np.int32), (np.arange(m), rows)), shape=(m, n))
    cur = adj[rows]
    # keep the running pair (A^(j-1), A^j) restricted to this block of rows
    for _ in range(k - 1):
        prev, cur = cur, _sign(cur @ adj)
    block = _sign(prev + cur).tocoo()
    off_diag = block.col != rows[block.row]
    return sp.csr_matrix(
        (block.data[off_diag], (block.row[off_diag], block.col[off_diag])), shape=(m, n)
    )


def _frontier_row(indptr: np.ndarray, nbrs: np.ndarray, e: int, k: int) -> np.ndarray:
    prev = np.array([e], dtype=np.int64)
    cur = np.unique(nbrs[indptr[e] : indptr[e + 1]])
    for _ in range(k - 1):
        if len(cur) == 0:
            prev = cur
            break
        starts, ends = indptr[cur], indptr[cur + 1]
        lens = ends - starts
        idx = np.repeat(starts - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens) + np.arange(lens.sum())
        prev, cur = cur, np.unique(nbrs[idx])
    row = np.union1d(prev, cur)
    return row[row != e]


def build_exact_khop(
    store: TripleStore,
    k: int,
    symmetric: bool = True,
    method: str = "product",
    max_entries: int = DEFAULT_MAX_ENTRIES,
    block_size: int = 2048,
    threads: int = 1,
) -> KHopNeighborhood:
    """Exact neighborhood ``sign(A^k + A^(k-1))`` minus the diagonal.

    ``method="product"`` multiplies boolean sparse row blocks by ``A``;
    ``method="frontier"`` expands exact-length walk frontiers one entity at a
    time, which needs far less working memory. Both give identical rows.

    Raises:
        ContractViolation: ``k < 1``.
        ResourceLimitError: the result would exceed ``max_entries`` nonzeros.
    """
    k = _check_k(k)
    n = store.num_entities
    adj = store.entity_adjacency(symmetric=symmetric).astype(np.int32)
    if method == "frontier":
        indptr, nbrs = adj.indptr.astype(np.int64), adj.indices.astype(np.int64)
        rows, total = [], 0
        for e in range(n):
            row = _frontier_row(indptr, nbrs, e, k)
            total += len(row)
            if total > max_entries:
                raise _budget_error(total, max_entries)
            rows.append(row)
        out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum([len(r) for r in rows], out=out_ptr[1:])
        members = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        return KHopNeighborhood(Kind.EXACT, k, out_ptr, members.astype(np.int64))
    if method != "product":
        raise ContractViolation(f"unknown method {method!r}")

    starts = list(range(0, n, block_size))
    blocks = []
    total = 0

    def work(s):
        return _exact_block(adj, np.arange(s, min(s + block_size, n)), k)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for block in pool.map(work, starts):
            total += block.nnz
            if total > max_entries:
                raise _budget_error(total, max_entries)
            blocks.append(block)
    mat = sp.vstack(blocks, format="csr") if blocks else sp.csr_matrix((0, 0), dtype=np.int32)
    return _from_sparse(mat, Kind.EXACT, k)


def _budget_error(total: int, budget: int) -> ResourceLimitError:
    return ResourceLimitError(
        f"exact k-hop structure exceeds the budget of {budget} entries (reached {total}); "
        "use the random-walk approximation (--rw) instead"
    )


def _walk_round(indptr, nbrs, deg, sources, k, rng) -> np.ndarray:
    """One walk from every source; returns ``src * n + visited`` keys."""
    n = len(deg)
    cur = sources.copy()
    src = sources
    keys = []
    for _ in range(k):
        d = deg[cur]
        alive = d > 0
        if not alive.all():
            cur, src, d = cur[alive], src[alive], d[alive]
        if len(cur) == 0:
            break
        pick = (rng.random(len(cur)) * d).astype(np.int64)
        cur = nbrs[indptr[cur] + pick]
        hit = cur != src
        keys.append(src[hit] * n + cur[hit])
    return np.concatenate(keys) if keys else np.zeros(0, dtype=np.int64)


def _merge_counts(keys, counts, new_keys):
    if len(new_keys) == 0:
        return keys, counts
    uk, uc = np.unique(new_keys, return_counts=True)
    all_k = np.concatenate([keys, uk])
    all_c = np.concatenate([counts, uc])
    order = np.argsort(all_k, kind="stable")
    all_k, all_c = all_k[order], all_c[order]
    first = np.concatenate([[True], all_k[1:] != all_k[:-1]])
    starts = np.flatnonzero(first)
    return all_k[starts], np.add.reduceat(all_c, starts)


def _run_walks(store, k, rounds, seed, symmetric, keys, counts, flush_at=8_000_000):
    n = store.num_entities
    csr = store.symmetric_neighbors() if symmetric else store.out_edges
    indptr, nbrs = csr.indptr, csr.neighbors
    deg = csr.degrees()
    sources = np.flatnonzero(deg > 0).astype(np.int64)
    buf, buffered = [], 0
    for j in rounds:
        rng = np.random.default_rng([seed, j])
        chunk = _walk_round(indptr, nbrs, deg, sources, k, rng)
        buf.append(chunk)
        buffered += len(chunk)
        if buffered >= flush_at:
            keys, counts = _merge_counts(keys, counts, np.concatenate(buf))
            buf, buffered = [], 0
    if buf:
        keys, counts = _merge_counts(keys, counts, np.concatenate(buf))
    rows = keys // n if n else keys
    indptr_out = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr_out[1:])
    return indptr_out, (keys % n if n else keys), counts, keys


def build_rw_khop(
    store: TripleStore, k: int, omega: int, seed: int = 0, symmetric: bool = True
) -> KHopNeighborhood:
    """Approximate the k-hop rows with ``omega`` random walks per entity.

    Each walk takes ``k`` steps, choosing uniformly among the current node's
    incident edges. Every visit to a node other than the source at steps
    ``1..k`` adds one to that node's count. Walk ``j`` of every source uses
    the generator seeded with ``(seed, j)``, so a build with ``omega = a`` is
    a prefix of one with ``omega = a + b`` (see :func:`extend_rw_khop`).
    """
    k = _check_k(k)
    if int(omega) != omega or omega < 1:
        raise ContractViolation(f"omega must be a positive integer, got {omega!r}")
    if seed < 0:
        raise ContractViolation("seed must be non-negative")
    empty = np.zeros(0, dtype=np.int64)
    indptr, members, counts, _ = _run_walks(store, k, range(int(omega)), seed, symmetric, empty, empty)
    return KHopNeighborhood(Kind.WALKS, k, indptr, members, counts, omega=int(omega), seed=int(seed))


def extend_rw_khop(
    store: TripleStore, neighborhood: KHopNeighborhood, extra: int, symmetric: bool = True
) -> KHopNeighborhood:
    """Add ``extra`` walks per entity, continuing the same seed stream."""
    if neighborhood.kind is not Kind.WALKS:
        raise ContractViolation("only walk neighborhoods can be extended")
    n = neighborhood.num_entities
    rows = np.repeat(np.arange(n, dtype=np.int64), neighborhood.row_sizes())
    keys = rows * n + neighborhood.members
    start = neighborhood.omega
    indptr, members, counts, _ = _run_walks(
        store, neighborhood.k, range(start, start + int(extra)), neighborhood.seed, symmetric,
        keys, neighborhood.counts.astype(np.int64),
    )
    return KHopNeighborhood(
        Kind.WALKS, neighborhood.k, indptr, members, counts,
        omega=start + int(extra), seed=neighborhood.seed,
    )


def fill_percentage(n: KHopNeighborhood, num_entities: int) -> FillReport:
    """Fraction of filled ``(entity, entity)`` cells."""
    if num_entities == 0:
        return FillReport(n.k, 0.0)
    return FillReport(n.k, n.nnz / float(num_entities) ** 2)


# -- file format --------------------------------------------------------------


def save_neighborhood(n: KHopNeighborhood, path: str | os.PathLike) -> None:
    width = 1 if n.counts is None else 2
    num = n.num_entities
    body = np.empty(num + width * n.nnz, dtype="<u4")
    row_of = np.repeat(np.arange(num, dtype=np.int64), n.row_sizes())
    g = np.arange(n.nnz, dtype=np.int64)
    # row i starts at i + width * indptr[i]: its length, then its pairs
    body[np.arange(num) + width * n.indptr[:-1]] = n.row_sizes()
    loc = row_of + 1 + width * g
    body[loc] = n.members
    if width == 2:
        body[loc + 1] = n.counts
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, int(n.kind), n.k, n.omega, n.seed, num))
        fh.write(body.tobytes())


def load_neighborhood(path: str | os.PathLike) -> KHopNeighborhood:
    with open(path, "rb") as fh:
        raw = fh.read()
    return _parse_neighborhood(raw, str(path))


def _parse_neighborhood(raw: bytes, name: str = "<bytes>") -> KHopNeighborhood:
    if len(raw) < _HEADER.size:
        raise NeighborhoodFormatError(f"{name}: truncated header")
    magic, version, kind, k, omega, seed, num = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise NeighborhoodFormatError(f"{name}: bad magic {magic!r}, not a k-hop neighborhood file")
    if version != FORMAT_VERSION:
        raise NeighborhoodFormatError(f"{name}: unsupported format version {version}")
    try:
        kind = Kind(kind)
    except ValueError:
        raise NeighborhoodFormatError(f"{name}: unknown kind {kind}") from None
    payload = raw[_HEADER.size :]
    if len(payload) % 4:
        raise NeighborhoodFormatError(f"{name}: body of {len(payload)} bytes is not a multiple of 4")
    body = np.frombuffer(payload, dtype="<u4")
    width = 1 if kind is Kind.EXACT else 2
    lengths = np.empty(num, dtype=np.int64)
    pos = 0
    for i in range(num):
        if pos >= len(body):
            raise NeighborhoodFormatError(f"{name}: truncated at row {i}")
        lengths[i] = body[pos]
        pos += 1 + width * int(body[pos])
    if pos != len(body):
        kind_msg = "truncated" if pos > len(body) else "trailing bytes in"
        raise NeighborhoodFormatError(f"{name}: {kind_msg} body")
    indptr = np.zeros(num + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    row_of = np.repeat(np.arange(num, dtype=np.int64), lengths)
    loc = row_of + 1 + width * np.arange(indptr[-1], dtype=np.int64)
    members = body[loc].astype(np.int64)
    if len(members) and members.max() >= num:
        raise NeighborhoodFormatError(f"{name}: member id {members.max()} outside [0, {num})")
    counts = body[loc + 1].astype(np.int64) if width == 2 else None
    return KHopNeighborhood(kind, int(k), indptr, members, counts, omega=int(omega), seed=int(seed))
