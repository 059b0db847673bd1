"""Embedding tables and the TransE / DistMult / RotatE distance functions.

All three kinds are expressed as a distance ``d_r(h, t)`` where smaller
means more plausible; DistMult is folded in by negating its trilinear
product. The plausibility score fed to self-adversarial weighting is
``gamma - d_r``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CheckpointFormatError, ContractViolation

INIT_EPSILON = 2.0

CKPT_MAGIC = b"SANSCKPT"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<8sHBIdQQ")


class ModelKind(str, Enum):
    TRANSE = "transe"
    DISTMULT = "distmult"
    ROTATE = "rotate"


# on-disk kind byte; TransE with the L2 norm gets its own code
_KIND_CODES = {
    (ModelKind.TRANSE, 1): 0,
    (ModelKind.DISTMULT, 1): 1,
    (ModelKind.ROTATE, 1): 2,
    (ModelKind.TRANSE, 2): 3,
}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(eq=False)
class EmbeddingModel:
    kind: ModelKind
    entity: np.ndarray
    relation: np.ndarray
    gamma: float
    dim: int
    norm: int = 1

    def __post_init__(self):
        self.kind = ModelKind(self.kind)

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation.shape[0]

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"entity": self.entity, "relation": self.relation}

    def copy(self) -> EmbeddingModel:
        return EmbeddingModel(
            self.kind, self.entity.copy(), self.relation.copy(), self.gamma, self.dim, self.norm
        )

    def astype(self, dtype) -> EmbeddingModel:
        return EmbeddingModel(
            self.kind, self.entity.astype(dtype), self.relation.astype(dtype), self.gamma, self.dim, self.norm
        )

    def check_ids(self, h, r, t) -> None:
        for ids, size, what in ((h, self.num_entities, "entity"), (t, self.num_entities, "entity"),
                                (r, self.num_relations, "relation")):
            ids = np.asarray(ids)
            if ids.size and (ids.min() < 0 or ids.max() >= size):
                raise ContractViolation(f"{what} id out of range [0, {size})")

    # -- vector level -----------------------------------------------------

    def distance_vectors(self, hv, rv, tv) -> np.ndarray:
        """Distance from gathered embedding rows (broadcast over leading axes)."""
        if self.kind is ModelKind.TRANSE:
            x = hv + rv - tv
            if self.norm == 1:
                return np.abs(x).sum(-1)
            return np.sqrt((x * x).sum(-1))
        if self.kind is ModelKind.DISTMULT:
            return -(hv * rv * tv).sum(-1)
        ur, ui = _rotate_residual(hv, rv, tv, self.dim)
        return np.sqrt((ur * ur).sum(-1) + (ui * ui).sum(-1))

    def gradient_vectors(self, hv, rv, tv):
        """Partial derivatives of the distance w.r.t. ``hv``, ``rv``, ``tv``.

        Non-differentiable points (L1 at 0, a zero-length residual) get a
        zero (sub)gradient.
        """
        if self.kind is ModelKind.TRANSE:
            x = hv + rv - tv
            if self.norm == 1:
                g = np.sign(x)
            else:
                n = np.sqrt((x * x).sum(-1, keepdims=True))
                g = np.divide(x, n, out=np.zeros_like(x), where=n > 0)
            return g, g.copy(), -g
        if self.kind is ModelKind.DISTMULT:
            return -rv * tv, -hv * tv, -hv * rv
        d = self.dim
        hr, hi = hv[..., :d], hv[..., d:]
        c, s = np.cos(rv), np.sin(rv)
        ur, ui = _rotate_residual(hv, rv, tv, d)
        n = np.sqrt((ur * ur).sum(-1, keepdims=True) + (ui * ui).sum(-1, keepdims=True))
        q = np.divide(1.0, n, out=np.zeros_like(n), where=n > 0)
        gh = np.concatenate([q * (ur * c + ui * s), q * (ui * c - ur * s)], axis=-1)
        gr = q * (ur * (-hr * s - hi * c) + ui * (hr * c - hi * s))
        gt = np.concatenate([-q * ur, -q * ui], axis=-1)
        return gh, gr, gt

    # -- id level ---------------------------------------------------------

    def distance(self, h, r, t) -> np.ndarray:
        self.check_ids(h, r, t)
        return self.distance_vectors(self.entity[h], self.relation[r], self.entity[t])

    def plausibility(self, h, r, t) -> np.ndarray:
        return self.gamma - self.distance(h, r, t)

    def distances_all(self, anchors, relations, side: str, chunk_elems: int = 1 << 22) -> np.ndarray:
        """Distances of every entity placed in the corrupted slot.

        ``side="tail"`` scores ``(anchor, r, e)`` for all ``e``; ``side="head"``
        scores ``(e, r, anchor)``. Returns an array of shape ``(len(anchors), |E|)``.
        """
        anchors = np.asarray(anchors, dtype=np.int64)
        relations = np.asarray(relations, dtype=np.int64)
        self.check_ids(anchors, relations, anchors)
        ne = self.num_entities
        width = self.entity.shape[1]
        step = max(1, chunk_elems // max(1, ne * width))
        out = np.empty((len(anchors), ne), dtype=np.result_type(self.entity, self.relation))
        cands = self.entity[None, :, :]
        for s in range(0, len(anchors), step):
            a = self.entity[anchors[s : s + step]][:, None, :]
            rv = self.relation[relations[s : s + step]][:, None, :]
            if side == "tail":
                out[s : s + step] = self.distance_vectors(a, rv, cands)
            elif side == "head":
                out[s : s + step] = self.distance_vectors(cands, rv, a)
            else:
                raise ContractViolation(f"side must be 'head' or 'tail', got {side!r}")
        return out


def _rotate_residual(hv, rv, tv, d):
    hr, hi = hv[..., :d], hv[..., d:]
    tr, ti = tv[..., :d], tv[..., d:]
    c, s = np.cos(rv), np.sin(rv)
    return hr * c - hi * s - tr, hr * s + hi * c - ti


def init_model(
    kind,
    num_entities: int,
    num_relations: int,
    dim: int,
    gamma: float,
    seed: int = 0,
    norm: int = 1,
    dtype=np.float64,
) -> EmbeddingModel:
    """Uniform initialisation in ``[-(gamma + 2) / d, (gamma + 2) / d]``.

    RotatE relation phases are drawn uniformly from ``[-pi, pi]`` instead.
    """
    kind = ModelKind(kind)
    if dim < 1:
        raise ContractViolation("embedding dimension must be >= 1")
    if norm not in (1, 2):
        raise ContractViolation("TransE norm must be 1 or 2")
    rng = np.random.default_rng(seed)
    bound = (gamma + INIT_EPSILON) / dim
    ent_width = 2 * dim if kind is ModelKind.ROTATE else dim
    entity = rng.uniform(-bound, bound, size=(num_entities, ent_width))
    if kind is ModelKind.ROTATE:
        relation = rng.uniform(-np.pi, np.pi, size=(num_relations, dim))
    else:
        relation = rng.uniform(-bound, bound, size=(num_relations, dim))
    return EmbeddingModel(kind, entity.astype(dtype), relation.astype(dtype), float(gamma), dim, norm)


def score(model: EmbeddingModel, h: int, r: int, t: int) -> float:
    """Distance ``d_r(h, t)`` of a single triple."""
    return float(model.distance(h, r, t))


def score_gradients(model: EmbeddingModel, h: int, r: int, t: int):
    """Gradients of ``d_r(h, t)`` w.r.t. the head, relation and tail rows."""
    model.check_ids(h, r, t)
    return model.gradient_vectors(model.entity[h], model.relation[r], model.entity[t])


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(model: EmbeddingModel, path: str | os.PathLike) -> None:
    code = _KIND_CODES[(model.kind, model.norm if model.kind is ModelKind.TRANSE else 1)]
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(
            CKPT_MAGIC, CKPT_VERSION, code, model.dim, model.gamma, model.num_entities, model.num_relations
        ))
        fh.write(np.ascontiguousarray(model.entity, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.relation, dtype="<f4").tobytes())


def load_checkpoint(path: str | os.PathLike, dtype=np.float32) -> EmbeddingModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEADER.size:
        raise CheckpointFormatError(f"{path}: truncated header")
    magic, version, code, dim, gamma, ne, nr = _CKPT_HEADER.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}, not a checkpoint")
    if version != CKPT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    if code not in _CODE_KINDS:
        raise CheckpointFormatError(f"{path}: unknown model kind code {code}")
    kind, norm = _CODE_KINDS[code]
    ent_width = 2 * dim if kind is ModelKind.ROTATE else dim
    body = raw[_CKPT_HEADER.size :]
    expected = 4 * (ne * ent_width + nr * dim)
    if len(body) != expected:
        raise CheckpointFormatError(f"{path}: body is {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f4")
    entity = values[: ne * ent_width].reshape(ne, ent_width).astype(dtype)
    relation = values[ne * ent_width :].reshape(nr, dim).astype(dtype)
    return EmbeddingModel(kind, entity, relation, float(gamma), int(dim), norm)
