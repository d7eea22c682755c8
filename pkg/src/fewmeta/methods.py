"""Method labels shared by the simulation harness and the command line.

Frequentist labels combine a heterogeneity estimator with an interval type,
``<EST>-<INTERVAL>``, e.g. ``DL-norm``, ``REML-KnHa`` or ``MP-KnHa-raw``:

* ``norm``: normal-quantile interval
* ``KnHa``: modified Knapp-Hartung (variance factor floored at 1)
* ``KnHa-raw``: unmodified Knapp-Hartung

Estimators are DL, REML, ML, MP, BM and EB (an alias of MP). Any prior
label accepted by :meth:`PriorSpec.parse` names a Bayesian method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .bayes import PriorSpec
from .model import MetaAnalysisError

ESTIMATOR_NAMES = ("DL", "REML", "ML", "MP", "EB", "BM")
_INTERVALS = {
    "NORM": "NORM",
    "KNHA": "KH-MOD",
    "KH-MOD": "KH-MOD",
    "KHMOD": "KH-MOD",
    "KNHA-RAW": "KH",
    "KH": "KH",
}

TABLE3_METHODS = (
    "DL-norm", "REML-norm", "EB-norm", "BM-norm",
    "DL-KnHa", "REML-KnHa", "EB-KnHa", "BM-KnHa",
    "Uniform(0,4)", "half-Normal(1.0)", "half-Normal(0.5)",
)

DEFAULT_ESTIMATORS = ("DL", "REML", "EB", "BM")
DEFAULT_PRIORS = ("half-Normal(0.5)", "half-Normal(1.0)", "Uniform(0,4)")


@dataclass(frozen=True)
class MethodSpec:
    label: str
    estimator: Optional[str] = None
    interval: Optional[str] = None
    prior: Optional[PriorSpec] = None

    @property
    def is_bayes(self) -> bool:
        return self.prior is not None

    @property
    def estimator_key(self) -> Optional[str]:
        """Estimator with aliases resolved (EB -> MP)."""
        if self.estimator is None:
            return None
        return "MP" if self.estimator == "EB" else self.estimator


def parse_method(label: str) -> MethodSpec:
    text = label.strip()
    head, sep, tail = text.partition("-")
    if sep and head.upper() in ESTIMATOR_NAMES and "(" not in text:
        interval = _INTERVALS.get(tail.upper())
        if interval is None:
            raise MetaAnalysisError(f"unknown interval type in method {label!r}")
        return MethodSpec(text, head.upper(), interval)
    try:
        prior = PriorSpec.parse(text)
    except MetaAnalysisError:
        raise MetaAnalysisError(f"unknown method {label!r}") from None
    return MethodSpec(text, prior=prior)


def split_list(text: str) -> list[str]:
    """Split a comma-separated list, ignoring commas inside parentheses."""
    items, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    items.append("".join(cur).strip())
    return [i for i in items if i]


def parse_methods(labels) -> list[MethodSpec]:
    if isinstance(labels, str):
        labels = split_list(labels)
    specs = [parse_method(l) for l in labels]
    seen = set()
    for s in specs:
        if s.label in seen:
            raise MetaAnalysisError(f"method {s.label!r} listed twice")
        seen.add(s.label)
    return specs
