"""Click-model value functions, optimal lists and click simulation.

Three models are supported, all parameterised by per-item attraction
probabilities ``theta``:

* cascade (CM): value is the probability of any click;
* dependent-click (DCM): adds per-position continuation probabilities
  ``lam``; value is the probability of a satisfactory (final) click;
* position-based (PBM): adds per-position examination probabilities ``p``;
  value is the expected number of clicks.

Lists are plain tuples of item ids. Parameter objects are immutable.
"""
import enum
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence, Tuple, Union

import numpy as np

from pessirank.errors import DomainError, ParameterLookupError, SizeError

RankedList = Tuple[str, ...]


class ModelKind(str, enum.Enum):
    CM = "cm"
    DCM = "dcm"
    PBM = "pbm"

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise DomainError(f"unknown click model {value!r}; expected cm, dcm or pbm") from None


def _check_prob(name, v):
    if not (isinstance(v, (int, float, np.floating, np.integer)) and 0.0 <= v <= 1.0):
        raise DomainError(f"{name} must be a probability in [0, 1], got {v!r}")
    return float(v)


def _freeze_theta(theta):
    checked = {}
    for item, v in theta.items():
        if not isinstance(item, str) or not item:
            raise DomainError(f"item ids must be non-empty strings, got {item!r}")
        checked[item] = _check_prob(f"theta[{item!r}]", v)
    return MappingProxyType(checked)


def _freeze_positions(name, values):
    return tuple(_check_prob(f"{name}[{k}]", v) for k, v in enumerate(values))


@dataclass(frozen=True)
class CmParams:
    theta: Mapping[str, float]

    kind = ModelKind.CM

    def __post_init__(self):
        object.__setattr__(self, "theta", _freeze_theta(self.theta))

    def position_weights(self, k):
        return (1.0,) * k

    def with_theta(self, theta):
        return CmParams(theta)


@dataclass(frozen=True)
class DcmParams:
    """``lam[k]`` is the probability of continuing after a click at position k."""

    theta: Mapping[str, float]
    lam: Sequence[float]

    kind = ModelKind.DCM

    def __post_init__(self):
        object.__setattr__(self, "theta", _freeze_theta(self.theta))
        object.__setattr__(self, "lam", _freeze_positions("lambda", self.lam))

    def position_weights(self, k):
        _check_positions(self.lam, k)
        return tuple(1.0 - v for v in self.lam[:k])

    def with_theta(self, theta):
        return DcmParams(theta, self.lam)


@dataclass(frozen=True)
class PbmParams:
    """``p[k]`` is the examination probability of position k."""

    theta: Mapping[str, float]
    p: Sequence[float]

    kind = ModelKind.PBM

    def __post_init__(self):
        object.__setattr__(self, "theta", _freeze_theta(self.theta))
        object.__setattr__(self, "p", _freeze_positions("p", self.p))

    def position_weights(self, k):
        _check_positions(self.p, k)
        return tuple(self.p[:k])

    def with_theta(self, theta):
        return PbmParams(theta, self.p)


ModelParams = Union[CmParams, DcmParams, PbmParams]
PARAMS_TYPES = {ModelKind.CM: CmParams, ModelKind.DCM: DcmParams, ModelKind.PBM: PbmParams}


@dataclass(frozen=True)
class GroundTruth:
    """Per-context parameters of one click model, all for lists of length ``k``."""

    model_kind: ModelKind
    per_context: Mapping[str, ModelParams]
    k: int

    def __post_init__(self):
        kind = ModelKind.parse(self.model_kind)
        object.__setattr__(self, "model_kind", kind)
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 1):
            raise DomainError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        for ctx, params in self.per_context.items():
            if not isinstance(params, PARAMS_TYPES[kind]):
                raise DomainError(f"context {ctx!r}: expected {kind.value} parameters")
            if len(params.theta) < self.k:
                raise SizeError(f"context {ctx!r} has {len(params.theta)} items, fewer than k={self.k}")
            params.position_weights(self.k)
        object.__setattr__(self, "per_context", MappingProxyType(dict(self.per_context)))

    @property
    def contexts(self):
        return tuple(sorted(self.per_context))


def _check_positions(values, k):
    if len(values) < k:
        raise DomainError(f"need {k} position parameters, got {len(values)}")


def as_ranked_list(items):
    """Validate and freeze a ranked list: non-empty, distinct, string ids."""
    lst = tuple(items)
    if not lst:
        raise DomainError("a ranked list needs at least one item")
    for item in lst:
        if not isinstance(item, str) or not item:
            raise DomainError(f"item ids must be non-empty strings, got {item!r}")
    if len(set(lst)) != len(lst):
        raise DomainError(f"ranked list has duplicate items: {lst}")
    return lst


def _attractions(lst, theta):
    try:
        return [theta[a] for a in lst]
    except KeyError as exc:
        raise ParameterLookupError(f"no attraction probability for item {exc.args[0]!r}") from None


def value_cm(lst, params):
    """Probability of a click: ``1 - prod(1 - theta)``."""
    prod = 1.0
    for t in _attractions(lst, params.theta):
        prod *= 1.0 - t
    return 1.0 - prod


def value_dcm(lst, params):
    """Probability of a satisfactory click: ``1 - prod(1 - (1 - lam_k) theta_k)``."""
    thetas = _attractions(lst, params.theta)
    weights = params.position_weights(len(lst))
    prod = 1.0
    for w, t in zip(weights, thetas):
        prod *= 1.0 - w * t
    return 1.0 - prod


def value_pbm(lst, params):
    """Expected number of clicks: ``sum_k theta_k p_k``."""
    thetas = _attractions(lst, params.theta)
    weights = params.position_weights(len(lst))
    return math.fsum(w * t for w, t in zip(weights, thetas))


_VALUE = {ModelKind.CM: value_cm, ModelKind.DCM: value_dcm, ModelKind.PBM: value_pbm}


def value(lst, params):
    """Dispatch to the value function of ``params``' model."""
    return _VALUE[params.kind](lst, params)


def _top_items(theta, k):
    if k < 1:
        raise SizeError(f"k must be positive, got {k}")
    if len(theta) < k:
        raise SizeError(f"cannot build a list of {k} from {len(theta)} items")
    return sorted(theta, key=lambda a: (-theta[a], a))[:k]


def _assign_to_positions(items, weights):
    # k-th best item goes to the position with the k-th largest weight
    order = sorted(range(len(weights)), key=lambda i: (-weights[i], i))
    lst = [None] * len(weights)
    for item, pos in zip(items, order):
        lst[pos] = item
    return tuple(lst)


def optimal_list_cm(params, k):
    """The ``k`` most attractive items, best first; ties by ascending id."""
    return tuple(_top_items(params.theta, k))


def optimal_list_dcm(params, k):
    return _assign_to_positions(_top_items(params.theta, k), params.position_weights(k))


def optimal_list_pbm(params, k):
    return _assign_to_positions(_top_items(params.theta, k), params.position_weights(k))


_OPTIMAL = {ModelKind.CM: optimal_list_cm, ModelKind.DCM: optimal_list_dcm, ModelKind.PBM: optimal_list_pbm}


def optimal_list(params, k):
    return _OPTIMAL[params.kind](params, k)


def simulate_click_matrix(kind, attraction, weights, u_click, u_stop):
    """Simulate clicks for a batch of displayed lists.

    Args:
        kind: click model.
        attraction: ``(n, K)`` attraction probability of the item at each slot.
        weights: ``(K,)`` or ``(n, K)`` position weights (``1 - lam`` for DCM,
            ``p`` for PBM, ignored for CM).
        u_click, u_stop: ``(n, K)`` uniforms on [0, 1); ``u_stop`` is used by
            DCM only.

    Returns:
        ``(n, K)`` uint8 click matrix.
    """
    kind = ModelKind.parse(kind)
    attraction = np.asarray(attraction, dtype=np.float64)
    if kind is ModelKind.PBM:
        return (u_click < attraction * weights).astype(np.uint8)
    raw = u_click < attraction
    if kind is ModelKind.CM:
        # keep only the first click; scanning ends there
        return (raw & (np.cumsum(raw, axis=1) == 1)).astype(np.uint8)
    stop = raw & (u_stop < weights)
    stopped_before = np.cumsum(stop, axis=1) - stop
    return (raw & (stopped_before == 0)).astype(np.uint8)


def simulate_clicks(model_kind, lst, params, rng):
    """Draw one click vector for ``lst`` under ``params``.

    Satisfaction (the DCM stopping event) is not observable and not returned.
    """
    kind = ModelKind.parse(model_kind)
    if params.kind is not kind:
        raise DomainError(f"{kind.value} simulation needs {kind.value} parameters")
    k = len(lst)
    attraction = np.asarray([_attractions(lst, params.theta)])
    weights = np.asarray(params.position_weights(k))
    u = rng.random((2, 1, k))
    return tuple(int(c) for c in simulate_click_matrix(kind, attraction, weights, u[0], u[1])[0])
