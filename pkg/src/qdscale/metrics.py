"""Forecast verification metrics and tabular reports.

Deterministic scores (MAE, RMSE), the ensemble CRPS estimator

    CRPS = mean_m |x_m - o|  -  (1 / 2M^2) sum_{m,m'} |x_m - x_{m'}|

averaged over grid cells (for a single member this reduces bitwise to MAE),
the fractions skill score over square neighborhoods, directional 1-D power
spectra, wind-speed and joint-component histograms, head-to-head win counts,
and per-row deltas between two backends' reports.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ConfigurationError


def mae(pred, truth):
    return float(np.abs(np.asarray(pred) - np.asarray(truth)).mean())


def rmse(pred, truth):
    diff = np.asarray(pred) - np.asarray(truth)
    return float(np.sqrt((diff * diff).mean()))


def crps_ensemble(members, obs):
    """Fair-ensemble CRPS averaged over all grid cells.

    members: [M, ...] stacked ensemble, obs: [...] matching observation.
    """
    members = np.asarray(members, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if members.shape[1:] != obs.shape:
        raise ConfigurationError(
            "ensemble %r does not stack over observation %r" % (members.shape, obs.shape)
        )
    m = members.shape[0]
    if m < 1:
        raise ConfigurationError("ensemble needs at least one member")
    term1 = float(np.abs(members - obs[None]).mean())
    if m == 1:
        return term1
    flat = members.reshape(m, -1)
    pair = np.abs(flat[:, None, :] - flat[None, :, :])
    term2 = float(pair.sum(axis=(0, 1)).mean()) / (2.0 * m * m)
    return term1 - term2


def fss(pred, truth, threshold, neighborhood):
    """Fractions skill score of the exceedance fields (>= threshold).

    Neighborhood fractions use a square window; windows overhanging the
    border treat outside cells as non-exceeding. 1.0 means perfect overlap;
    if neither field exceeds anywhere the score is 1.0 by convention.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 2 or pred.shape != truth.shape:
        raise ConfigurationError(
            "fss expects two identical 2-D fields, got %r and %r" % (pred.shape, truth.shape)
        )
    if neighborhood < 1 or neighborhood % 2 == 0 or neighborhood > min(pred.shape):
        raise ConfigurationError(
            "neighborhood must be odd, >= 1 and fit the %r grid, got %r"
            % (pred.shape, neighborhood)
        )
    fp = uniform_filter((pred >= threshold).astype(np.float64), size=neighborhood,
                        mode="constant", cval=0.0)
    ft = uniform_filter((truth >= threshold).astype(np.float64), size=neighborhood,
                        mode="constant", cval=0.0)
    num = float(((fp - ft) ** 2).mean())
    den = float((fp**2 + ft**2).mean())
    if den == 0.0:
        return 1.0
    return 1.0 - num / den


def directional_spectrum(fields, direction="zonal"):
    """1-D power spectrum of (u, v) along one grid direction.

    fields: [..., 2, N, N]. Rows (zonal) or columns (meridional) are
    transformed independently and their squared magnitudes averaged; the
    component average carries a 1/2 and the usual 1/N^2 normalization:

        power[k] = 0.5 * (mean|u_hat_k|^2 + mean|v_hat_k|^2) / N^2

    for k = 1 .. N/2 - 1 (mean and Nyquist excluded).
    """
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim < 3 or fields.shape[-3] != 2 or fields.shape[-1] != fields.shape[-2]:
        raise ConfigurationError("expected [..., 2, N, N] fields, got %r" % (fields.shape,))
    n = fields.shape[-1]
    if n < 4 or n & (n - 1):
        raise ConfigurationError("grid size must be a power of two >= 4, got %d" % n)
    if direction == "meridional":
        fields = np.swapaxes(fields, -1, -2)
    elif direction != "zonal":
        raise ConfigurationError("direction must be 'zonal' or 'meridional', got %r" % direction)
    spec = np.fft.fft(fields, axis=-1)
    power_uv = (np.abs(spec) ** 2).mean(axis=tuple(range(fields.ndim - 3)) + (-2,))
    k = np.arange(1, n // 2)
    power = 0.5 * (power_uv[0, k] + power_uv[1, k]) / n**2
    return k, power


def fit_loglog_slope(k, power, kmin, kmax):
    """Least-squares slope of log(power) against log(k) over [kmin, kmax]."""
    k = np.asarray(k, dtype=np.float64)
    power = np.asarray(power, dtype=np.float64)
    sel = (k >= kmin) & (k <= kmax)
    if sel.sum() < 2:
        raise ConfigurationError("need at least two wavenumbers in [%g, %g]" % (kmin, kmax))
    if np.any(power[sel] <= 0):
        raise ConfigurationError("power must be positive over the fit band")
    slope, _ = np.polyfit(np.log(k[sel]), np.log(power[sel]), 1)
    return float(slope)


def windspeed_log_pdf(fields, bins=40, vmax=None):
    """log10 density of wind speed pooled over all cells; empty bins -> -inf."""
    fields = np.asarray(fields, dtype=np.float64)
    if bins < 2:
        raise ConfigurationError("need at least 2 bins, got %r" % bins)
    speed = np.hypot(fields[..., 0, :, :], fields[..., 1, :, :]).ravel()
    if vmax is None:
        vmax = float(speed.max())
    edges = np.linspace(0.0, vmax, bins + 1)
    density, _ = np.histogram(speed, bins=edges, density=True)
    with np.errstate(divide="ignore"):
        return edges, np.log10(density)


def joint_histogram(fields, bins=40, bound=None):
    """Joint (u, v) density on a symmetric square range; returns (edges, density)."""
    fields = np.asarray(fields, dtype=np.float64)
    if bins < 2:
        raise ConfigurationError("need at least 2 bins, got %r" % bins)
    u = fields[..., 0, :, :].ravel()
    v = fields[..., 1, :, :].ravel()
    if bound is None:
        bound = float(max(np.abs(u).max(), np.abs(v).max()))
    edges = np.linspace(-bound, bound, bins + 1)
    density, _, _ = np.histogram2d(u, v, bins=[edges, edges], density=True)
    return edges, density


@dataclass
class MetricsReport:
    """Per-timestep, per-variable scores for one model on one split."""

    model: str
    split: str
    members: int
    rows: list = field(default_factory=list)

    def add(self, time_id, variable, metric, value):
        self.rows.append(
            {"time_id": int(time_id), "variable": variable, "metric": metric,
             "value": float(value)}
        )

    def values(self, metric, variable=None):
        return [
            r["value"]
            for r in self.rows
            if r["metric"] == metric and (variable is None or r["variable"] == variable)
        ]

    def aggregate(self):
        """(metric, variable) -> (mean, std) over timesteps."""
        keys = sorted({(r["metric"], r["variable"]) for r in self.rows})
        out = {}
        for metric, variable in keys:
            vals = np.array(self.values(metric, variable))
            out[(metric, variable)] = (float(vals.mean()), float(vals.std()))
        return out

    def summary_lines(self):
        return [
            "%s[%s] %s: %s" % (metric, variable, self.model, format_mean_std(m, s))
            for (metric, variable), (m, s) in self.aggregate().items()
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "split", "members", "time_id", "variable",
                             "metric", "value"])
            for r in self.rows:
                writer.writerow([self.model, self.split, self.members, r["time_id"],
                                 r["variable"], r["metric"], repr(r["value"])])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            recs = list(csv.DictReader(fh))
        if not recs:
            raise ConfigurationError("metrics csv %s is empty" % path)
        report = cls(model=recs[0]["model"], split=recs[0]["split"],
                     members=int(recs[0]["members"]))
        for rec in recs:
            report.add(rec["time_id"], rec["variable"], rec["metric"], float(rec["value"]))
        return report

    def to_json(self, path):
        agg = {
            "%s/%s" % (metric, variable): {"mean": m, "std": s,
                                           "formatted": format_mean_std(m, s)}
            for (metric, variable), (m, s) in self.aggregate().items()
        }
        payload = {"model": self.model, "split": self.split, "members": self.members,
                   "aggregates": agg}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")


def format_mean_std(mean, std):
    return "%.4f ± %.4f" % (mean, std)


def format_win_counts(wins, total):
    pct = 100.0 * wins / total if total else 0.0
    return "%d/%d (%.1f%%)" % (wins, total, pct)


def _row_map(report):
    out = {}
    for r in report.rows:
        key = (r["time_id"], r["variable"], r["metric"])
        if key in out:
            raise ConfigurationError("duplicate report row %r" % (key,))
        out[key] = r["value"]
    return out


def _aligned(report_a, report_b):
    a, b = _row_map(report_a), _row_map(report_b)
    if a.keys() != b.keys():
        raise ConfigurationError(
            "reports cover different rows (%d vs %d)" % (len(a), len(b))
        )
    return a, b


def win_counts(report_a, report_b):
    """How often report_b strictly beats report_a (lower value wins)."""
    a, b = _aligned(report_a, report_b)
    wins = sum(1 for key in a if b[key] < a[key])
    total = len(a)
    return {"wins": wins, "total": total,
            "percent": 100.0 * wins / total if total else 0.0,
            "formatted": format_win_counts(wins, total)}


def backend_delta(report_noisy, report_exact):
    """Per-row (noisy - exact) score differences, sorted by row key."""
    noisy, exact = _aligned(report_noisy, report_exact)
    return [
        {"time_id": t, "variable": var, "metric": met,
         "exact": exact[(t, var, met)], "noisy": noisy[(t, var, met)],
         "delta": noisy[(t, var, met)] - exact[(t, var, met)]}
        for (t, var, met) in sorted(noisy)
    ]
