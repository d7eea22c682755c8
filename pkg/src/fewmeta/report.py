"""Per-dataset analysis across methods, with CSV, forest and text renderings."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

from .bayes import DEFAULT_BAYES, BayesConfig, posterior_mu, posterior_tau
from .heterogeneity import DEFAULT_CONFIG, EstimatorConfig, estimate_tau, tau_q_profile_ci
from .methods import MethodSpec
from .model import ConvergenceError, Dataset, MetaAnalysisError, require_pooled
from .pooling import ci_knapp_hartung, ci_normal, normal_quantile, pooled_estimate

REPORT_HEADER = ("section", "label", "tau", "point", "se", "low", "high", "width")
FOREST_HEADER = ("label", "point", "low", "high")


@dataclass(frozen=True)
class StudyRow:
    label: str
    y: float
    se: float
    low: float
    high: float
    corrected: bool = False


@dataclass(frozen=True)
class MethodRow:
    label: str
    tau: float
    point: float
    low: float
    high: float

    @property
    def width(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class TauIntervalRow:
    label: str
    tau: float
    low: float
    high: float

    @property
    def width(self) -> float:
        return self.high - self.low


@dataclass
class AnalysisReport:
    level: float
    studies: list[StudyRow] = field(default_factory=list)
    methods: list[MethodRow] = field(default_factory=list)
    tau_intervals: list[TauIntervalRow] = field(default_factory=list)

    def method(self, label: str) -> MethodRow:
        for row in self.methods:
            if row.label == label:
                return row
        raise KeyError(label)

    # CSV ---------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for s in self.studies:
            w.writerow(["study", s.label, "", _num(s.y), _num(s.se), _num(s.low), _num(s.high),
                        _num(s.high - s.low)])
        for m in self.methods:
            w.writerow(["method", m.label, _num(m.tau), _num(m.point), "", _num(m.low),
                        _num(m.high), _num(m.width)])
        for t in self.tau_intervals:
            w.writerow(["tau_interval", t.label, _num(t.tau), "", "", _num(t.low), _num(t.high),
                        _num(t.width)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, level: float) -> "AnalysisReport":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != REPORT_HEADER:
            raise MetaAnalysisError("not an analysis report CSV")
        rep = cls(level)
        for r in rows[1:]:
            sec, label = r[0], r[1]
            f = [float(x) if x else math.nan for x in r[2:]]
            tau, point, se, low, high = f[:5]
            if sec == "study":
                rep.studies.append(StudyRow(label, point, se, low, high))
            elif sec == "method":
                rep.methods.append(MethodRow(label, tau, point, low, high))
            elif sec == "tau_interval":
                rep.tau_intervals.append(TauIntervalRow(label, tau, low, high))
            else:
                raise MetaAnalysisError(f"unknown report section {sec!r}")
        return rep

    def forest_rows(self) -> list[tuple[str, float, float, float]]:
        out = [(s.label, s.y, s.low, s.high) for s in self.studies]
        out += [(m.label, m.point, m.low, m.high) for m in self.methods]
        return out

    def forest_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FOREST_HEADER)
        for label, p, lo, hi in self.forest_rows():
            w.writerow([label, _num(p), _num(lo), _num(hi)])
        return buf.getvalue()

    def forest_svg(self) -> str:
        return render_forest_svg(self.forest_rows(), n_studies=len(self.studies))

    # text --------------------------------------------------------------
    def to_text(self) -> str:
        pct = f"{100 * self.level:g}%"
        lines = []
        if self.studies:
            lines.append(f"Studies ({pct} normal intervals)")
            lines.append(_table(["study", "y", "se", "low", "high"],
                                [[s.label + (" *" if s.corrected else ""), s.y, s.se, s.low, s.high]
                                 for s in self.studies]))
            if any(s.corrected for s in self.studies):
                lines.append("* 0.5 added to every cell (zero count)")
        if self.methods:
            lines.append("")
            lines.append(f"Pooled effect ({pct} intervals)")
            lines.append(_table(["method", "tau", "mu", "low", "high", "width"],
                                [[m.label, m.tau, m.point, m.low, m.high, m.width]
                                 for m in self.methods]))
        if self.tau_intervals:
            lines.append("")
            lines.append(f"Heterogeneity tau ({pct} intervals)")
            lines.append(_table(["source", "tau", "low", "high"],
                                [[t.label, t.tau, t.low, t.high] for t in self.tau_intervals]))
            if any(math.isinf(t.high) for t in self.tau_intervals):
                lines.append("inf: bound lies beyond tau_max (see --tau-max)")
        return "\n".join(lines) + "\n"


def _num(x: float) -> str:
    return repr(float(x))


def _fmt6(x) -> str:
    if isinstance(x, str):
        return x
    return f"{x:.6g}"


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(header)] + [[_fmt6(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    out = []
    for j, r in enumerate(cells):
        out.append("  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i])
                             for i, c in enumerate(r)))
        if j == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def analyze(dataset: Dataset, methods: Sequence[MethodSpec], level: float = 0.95,
            est_cfg: EstimatorConfig = DEFAULT_CONFIG,
            bayes_cfg: BayesConfig = DEFAULT_BAYES) -> AnalysisReport:
    """Study rows, one row per requested method and tau intervals.

    Frequentist rows report the estimator's tau and the inverse-variance
    mean; Bayesian rows report posterior medians, the central mu interval
    and (in ``tau_intervals``) the shortest tau interval.
    """
    if not 0 < level < 1:
        raise MetaAnalysisError("level must lie in (0, 1)")
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise MetaAnalysisError("each method may be requested once")
    rep = AnalysisReport(level)
    z = normal_quantile(0.5 + level / 2.0)
    flags = dataset.corrected or (False,) * dataset.k
    for s, flag in zip(dataset.studies, flags):
        rep.studies.append(StudyRow(s.id, s.y, s.se, s.y - z * s.se, s.y + z * s.se, flag))
    if not methods:
        return rep
    require_pooled(dataset, "pooled methods")
    taus: dict[str, float] = {}
    for spec in methods:
        if spec.is_bayes:
            tp = posterior_tau(dataset, spec.prior, bayes_cfg)
            mp = posterior_mu(dataset, tp)
            iv = mp.interval(level)
            tau_med = tp.median()
            rep.methods.append(MethodRow(spec.label, tau_med, mp.median(), iv.lower, iv.upper))
            lo, hi = tp.shortest_interval(level)
            rep.tau_intervals.append(TauIntervalRow(spec.label, tau_med, lo, hi))
            continue
        key = spec.estimator_key
        if key not in taus:
            taus[key] = estimate_tau(dataset, key, est_cfg).tau
        tau = taus[key]
        pooled = pooled_estimate(dataset, tau)
        if spec.interval == "NORM":
            iv = ci_normal(pooled, level)
        else:
            iv, _ = ci_knapp_hartung(dataset, tau, level, modified=spec.interval == "KH-MOD")
        rep.methods.append(MethodRow(spec.label, tau, pooled.mu_hat, iv.lower, iv.upper))
    # The Q-profile interval inverts the same equation that defines MP.
    try:
        mp_tau = taus["MP"] if "MP" in taus else estimate_tau(dataset, "MP", est_cfg).tau
    except ConvergenceError:
        mp_tau = math.inf
    lo, hi = tau_q_profile_ci(dataset, level, est_cfg, open_upper=True)
    rep.tau_intervals.insert(0, TauIntervalRow("Q-profile", mp_tau, lo, hi))
    return rep


def render_forest_svg(rows: Sequence[tuple[str, float, float, float]], n_studies: int = 0,
                      width: int = 720, row_height: int = 22) -> str:
    """Static forest plot: one horizontal interval per row, pooled rows as diamonds."""
    finite = [v for _, p, lo, hi in rows for v in (p, lo, hi) if math.isfinite(v)]
    if not finite:
        finite = [-1.0, 1.0]
    xmin, xmax = min(finite + [0.0]), max(finite + [0.0])
    pad = 0.05 * (xmax - xmin or 1.0)
    xmin, xmax = xmin - pad, xmax + pad
    left, right, top = 190, 30, 20
    plot_w = width - left - right
    height = top * 2 + row_height * (len(rows) + 1) + 20

    def sx(v):
        return left + (v - xmin) / (xmax - xmin) * plot_w

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    y_bottom = top + row_height * (len(rows) + 0.5)
    x0 = sx(0.0)
    parts.append(f'<line x1="{x0:.2f}" y1="{top}" x2="{x0:.2f}" y2="{y_bottom:.2f}" '
                 'stroke="#999" stroke-dasharray="4,3"/>')
    for i, (label, p, lo, hi) in enumerate(rows):
        yc = top + row_height * (i + 1)
        parts.append(f'<text x="8" y="{yc + 4:.2f}">{_escape(label)}</text>')
        if not (math.isfinite(lo) and math.isfinite(hi)):
            continue
        parts.append(f'<line x1="{sx(lo):.2f}" y1="{yc}" x2="{sx(hi):.2f}" y2="{yc}" '
                     'stroke="black"/>')
        if i < n_studies:
            parts.append(f'<rect x="{sx(p) - 4:.2f}" y="{yc - 4}" width="8" height="8" '
                         'fill="black"/>')
        else:
            xp = sx(p)
            parts.append(f'<polygon points="{sx(lo):.2f},{yc} {xp:.2f},{yc - 6} '
                         f'{sx(hi):.2f},{yc} {xp:.2f},{yc + 6}" fill="#4a6fa5"/>')
    parts.append(f'<line x1="{left}" y1="{y_bottom:.2f}" x2="{width - right}" '
                 f'y2="{y_bottom:.2f}" stroke="black"/>')
    for t in _ticks(xmin, xmax):
        xt = sx(t)
        parts.append(f'<line x1="{xt:.2f}" y1="{y_bottom:.2f}" x2="{xt:.2f}" '
                     f'y2="{y_bottom + 5:.2f}" stroke="black"/>')
        parts.append(f'<text x="{xt:.2f}" y="{y_bottom + 18:.2f}" '
                     f'text-anchor="middle">{t:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12:
        out.append(round(t, 12))
        t += step
    return out


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))

