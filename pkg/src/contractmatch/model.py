"""Problem-instance data model, JSON (de)serialization and random instance generation.

Contract types are aggregated: one record per type with an integer capacity.
All units of a buy type share one failure bit, so a failure configuration is a
bit vector over buy types (1 = alive, 0 = failed). Penalties are stored as
nonnegative magnitudes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import ValidationError


class ParseError(ValidationError):
    """The document is not well-formed JSON (or not a JSON object)."""


def _check_number(value: Any, path: str, *, lo: float = 0.0, hi: float = math.inf) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"expected a number, got {value!r}", path)
    value = float(value)
    if not math.isfinite(value) or value < lo or value > hi:
        bounds = f"[{lo}, {hi}]" if math.isfinite(hi) else f">= {lo}"
        raise ValidationError(f"value {value!r} out of range {bounds}", path)
    return value


def _check_count(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ValidationError(f"expected a nonnegative integer, got {value!r}", path)
    if value < 0:
        raise ValidationError(f"expected a nonnegative integer, got {value!r}", path)
    return int(value)


def _check_id(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ValidationError(f"expected a nonempty string id, got {value!r}", path)
    return value


@dataclass(frozen=True)
class BuyContractType:
    id: str
    price: float
    fail_prob: float
    capacity: int

    def __post_init__(self):
        _check_id(self.id, "id")
        object.__setattr__(self, "price", _check_number(self.price, "price"))
        object.__setattr__(self, "fail_prob", _check_number(self.fail_prob, "fail_prob", hi=1.0))
        object.__setattr__(self, "capacity", _check_count(self.capacity, "capacity"))


@dataclass(frozen=True)
class SellContractType:
    id: str
    price: float
    penalty: float  # magnitude; the negative reward for a breach is -penalty
    capacity: int

    def __post_init__(self):
        _check_id(self.id, "id")
        object.__setattr__(self, "price", _check_number(self.price, "price"))
        object.__setattr__(self, "penalty", _check_number(self.penalty, "penalty"))
        object.__setattr__(self, "capacity", _check_count(self.capacity, "capacity"))


@dataclass(frozen=True)
class ProblemInstance:
    """Buy/sell contract types plus the admissible bipartite edges ``(buy_index, sell_index)``."""

    buys: tuple[BuyContractType, ...]
    sells: tuple[SellContractType, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        buys = tuple(self.buys)
        sells = tuple(self.sells)
        if len(buys) < 1:
            raise ValidationError("at least one buy contract type is required", "buys")
        if len(sells) < 1:
            raise ValidationError("at least one sell contract type is required", "sells")
        for name, items in (("buys", buys), ("sells", sells)):
            seen: set[str] = set()
            for idx, item in enumerate(items):
                if item.id in seen:
                    raise ValidationError(f"duplicate id {item.id!r}", f"{name}[{idx}].id")
                seen.add(item.id)
        edges = []
        seen_edges: set[tuple[int, int]] = set()
        for idx, edge in enumerate(self.edges):
            try:
                u, i = edge
            except (TypeError, ValueError):
                raise ValidationError(f"expected a [buy, sell] pair, got {edge!r}", f"edges[{idx}]")
            u = _check_count(u, f"edges[{idx}][0]")
            i = _check_count(i, f"edges[{idx}][1]")
            if u >= len(buys):
                raise ValidationError(f"buy index {u} out of range", f"edges[{idx}][0]")
            if i >= len(sells):
                raise ValidationError(f"sell index {i} out of range", f"edges[{idx}][1]")
            if (u, i) in seen_edges:
                raise ValidationError(f"duplicate edge {[u, i]}", f"edges[{idx}]")
            seen_edges.add((u, i))
            edges.append((u, i))
        object.__setattr__(self, "buys", buys)
        object.__setattr__(self, "sells", sells)
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    @property
    def q(self) -> int:
        return len(self.buys)

    @property
    def k(self) -> int:
        return len(self.sells)

    @property
    def fail_probs(self) -> np.ndarray:
        return np.array([b.fail_prob for b in self.buys], dtype=float)

    def incident_buys(self, sell: int) -> tuple[int, ...]:
        return tuple(u for u, i in self.edges if i == sell)

    def incident_sells(self, buy: int) -> tuple[int, ...]:
        return tuple(i for u, i in self.edges if u == buy)


@dataclass(frozen=True, order=False)
class FailureConfiguration:
    """Bit vector over buy types stored as an integer mask: bit ``u`` set means buy ``u`` is alive.

    The text form lists buy 0 first, so ``"10"`` means buy 0 alive and buy 1 failed.
    """

    mask: int
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError("configuration length must be >= 1", "size")
        if self.mask < 0 or self.mask >> self.size:
            raise ValidationError(f"mask {self.mask} does not fit in {self.size} bits", "mask")

    @classmethod
    def from_bits(cls, bits: str | Sequence[int | bool]) -> "FailureConfiguration":
        if isinstance(bits, str):
            if not bits or set(bits) - {"0", "1"}:
                raise ValidationError(f"expected a 0/1 string, got {bits!r}", "config")
            values = [c == "1" for c in bits]
        else:
            values = [bool(b) for b in bits]
        mask = sum(1 << u for u, alive in enumerate(values) if alive)
        return cls(mask, len(values))

    @classmethod
    def all_alive(cls, q: int) -> "FailureConfiguration":
        return cls((1 << q) - 1, q)

    @classmethod
    def all_failed(cls, q: int) -> "FailureConfiguration":
        return cls(0, q)

    @property
    def alive(self) -> tuple[bool, ...]:
        return tuple(bool(self.mask >> u & 1) for u in range(self.size))

    @property
    def bits(self) -> str:
        return "".join("1" if self.mask >> u & 1 else "0" for u in range(self.size))

    @property
    def failed_count(self) -> int:
        return self.size - bin(self.mask).count("1")

    def __str__(self) -> str:
        return self.bits

    def __repr__(self) -> str:
        return f"FailureConfiguration({self.bits!r})"


def enumerate_configurations(q: int) -> Iterator[FailureConfiguration]:
    """All 2**q configurations in lexicographic order of their bit strings."""
    for values in itertools.product((0, 1), repeat=q):
        yield FailureConfiguration.from_bits(values)


@dataclass(frozen=True)
class Allocation:
    """Numbers of contracts held per buy type (``n``) and per sell type (``m``)."""

    n: tuple[int, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(_check_count(v, f"n[{u}]") for u, v in enumerate(self.n)))
        object.__setattr__(self, "m", tuple(_check_count(v, f"m[{i}]") for i, v in enumerate(self.m)))

    @classmethod
    def zero(cls, instance: ProblemInstance) -> "Allocation":
        return cls((0,) * instance.q, (0,) * instance.k)

    @property
    def is_zero(self) -> bool:
        return not any(self.n) and not any(self.m)

    def validate_for(self, instance: ProblemInstance) -> "Allocation":
        if len(self.n) != instance.q:
            raise ValidationError(f"expected {instance.q} entries, got {len(self.n)}", "n")
        if len(self.m) != instance.k:
            raise ValidationError(f"expected {instance.k} entries, got {len(self.m)}", "m")
        for u, (v, b) in enumerate(zip(self.n, instance.buys)):
            if v > b.capacity:
                raise ValidationError(f"{v} exceeds capacity {b.capacity}", f"n[{u}]")
        for i, (v, s) in enumerate(zip(self.m, instance.sells)):
            if v > s.capacity:
                raise ValidationError(f"{v} exceeds capacity {s.capacity}", f"m[{i}]")
        return self


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "buys": [
            {"id": b.id, "price": b.price, "fail_prob": b.fail_prob, "capacity": b.capacity}
            for b in instance.buys
        ],
        "sells": [
            {"id": s.id, "price": s.price, "penalty": s.penalty, "capacity": s.capacity}
            for s in instance.sells
        ],
        "edges": [[u, i] for u, i in instance.edges],
    }


def dump_instance(instance: ProblemInstance, indent: int | None = 2) -> str:
    return json.dumps(instance_to_dict(instance), indent=indent)


def _load_json(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"document is not UTF-8: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}")


def _require(obj: Any, key: str, path: str) -> Any:
    if key not in obj:
        raise ValidationError("missing field", f"{path}.{key}" if path else key)
    return obj[key]


def _rebase(exc: ValidationError, prefix: str) -> ValidationError:
    return ValidationError(str(exc).split(": ", 1)[-1], f"{prefix}.{exc.path}" if exc.path else prefix)


def instance_from_dict(doc: Any) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise ParseError("instance document must be a JSON object")
    buys_doc = _require(doc, "buys", "")
    sells_doc = _require(doc, "sells", "")
    edges_doc = _require(doc, "edges", "")
    for name, value in (("buys", buys_doc), ("sells", sells_doc), ("edges", edges_doc)):
        if not isinstance(value, list):
            raise ValidationError("expected an array", name)

    buys = []
    for idx, b in enumerate(buys_doc):
        path = f"buys[{idx}]"
        if not isinstance(b, dict):
            raise ValidationError("expected an object", path)
        try:
            buys.append(BuyContractType(
                _require(b, "id", path), _require(b, "price", path),
                _require(b, "fail_prob", path), _require(b, "capacity", path),
            ))
        except ValidationError as exc:
            raise exc if exc.path.startswith(path) else _rebase(exc, path)
    sells = []
    for idx, s in enumerate(sells_doc):
        path = f"sells[{idx}]"
        if not isinstance(s, dict):
            raise ValidationError("expected an object", path)
        try:
            sells.append(SellContractType(
                _require(s, "id", path), _require(s, "price", path),
                _require(s, "penalty", path), _require(s, "capacity", path),
            ))
        except ValidationError as exc:
            raise exc if exc.path.startswith(path) else _rebase(exc, path)
    return ProblemInstance(tuple(buys), tuple(sells), tuple(tuple(e) if isinstance(e, list) else e for e in edges_doc))


def parse_instance(text: str | bytes) -> ProblemInstance:
    """Parse and validate an instance document (see README for the format)."""
    return instance_from_dict(_load_json(text))


def load_instance(path) -> ProblemInstance:
    with open(path, "rb") as fh:
        return parse_instance(fh.read())


def dump_allocation(alloc: Allocation) -> str:
    return json.dumps({"n": list(alloc.n), "m": list(alloc.m)})


def parse_allocation(text: str | bytes, instance: ProblemInstance | None = None) -> Allocation:
    doc = _load_json(text)
    if not isinstance(doc, dict):
        raise ParseError("allocation document must be a JSON object")
    n = _require(doc, "n", "")
    m = _require(doc, "m", "")
    if not isinstance(n, list) or not isinstance(m, list):
        raise ValidationError("expected arrays for n and m", "n" if not isinstance(n, list) else "m")
    alloc = Allocation(tuple(n), tuple(m))
    return alloc.validate_for(instance) if instance is not None else alloc


# --------------------------------------------------------------------------
# random generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PriceRanges:
    """Uniform sampling ranges used by :func:`generate_instance`.

    The defaults model cheap, unreliable supply covering expensive sells with
    a heavy breach penalty, so that diversified coverage is sometimes worth it.
    """

    buy_price: tuple[float, float] = (1.0, 4.0)
    fail_prob: tuple[float, float] = (0.05, 0.4)
    sell_price: tuple[float, float] = (4.0, 10.0)
    penalty: tuple[float, float] = (5.0, 20.0)
    buy_capacity: tuple[int, int] = (1, 5)
    sell_capacity: tuple[int, int] = (1, 5)


def generate_instance(
    q: int,
    k: int,
    edge_density: float = 0.5,
    price_ranges: PriceRanges | None = None,
    rng_seed: int = 0,
) -> ProblemInstance:
    """Draw a random instance; identical ``rng_seed`` gives an identical instance.

    Each admissible edge is kept with probability ``edge_density``. A sell left
    without any edge is connected to one uniformly chosen buy.
    """
    if q < 1 or k < 1:
        raise ValidationError("q and k must be >= 1", "q" if q < 1 else "k")
    if not 0.0 < edge_density <= 1.0:
        raise ValidationError(f"edge density {edge_density} not in (0, 1]", "edge_density")
    pr = price_ranges or PriceRanges()
    rng = np.random.default_rng(rng_seed)

    def draw(bounds: tuple[float, float], digits: int) -> float:
        return round(float(rng.uniform(*bounds)), digits)

    def draw_int(bounds: tuple[int, int]) -> int:
        return int(rng.integers(bounds[0], bounds[1] + 1))

    buys = tuple(
        BuyContractType(f"b{u}", draw(pr.buy_price, 2), draw(pr.fail_prob, 3), draw_int(pr.buy_capacity))
        for u in range(q)
    )
    sells = tuple(
        SellContractType(f"s{i}", draw(pr.sell_price, 2), draw(pr.penalty, 2), draw_int(pr.sell_capacity))
        for i in range(k)
    )
    keep = rng.random((q, k)) < edge_density
    for i in range(k):
        if not keep[:, i].any():
            keep[int(rng.integers(q)), i] = True
    edges = tuple((u, i) for u in range(q) for i in range(k) if keep[u, i])
    return ProblemInstance(buys, sells, edges)


def tiny_instance() -> ProblemInstance:
    """Two buys (A: price 1, p 0.1; B: price 2, p 0.5) covering one sell X (price 4, penalty 6)."""
    return ProblemInstance(
        (BuyContractType("A", 1.0, 0.1, 1), BuyContractType("B", 2.0, 0.5, 1)),
        (SellContractType("X", 4.0, 6.0, 1),),
        ((0, 0), (1, 0)),
    )
