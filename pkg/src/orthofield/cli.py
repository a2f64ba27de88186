"""Experiment runner: one JSON config in, deterministic tables and reports out.

Subcommands
-----------

* ``simulate-field``    — normalized rectangular partial sums of a family,
  with empirical summary, normal-distance statistics, and histogram.
* ``decompose``         — exact splitting terms, martingale norm, and the
  shifted-coboundary growth curve with fitted-constant verdicts.
* ``check-conditions``  — the six-condition verdict report.
* ``counterexample``    — stacked-levels column-sum simulation, exact
  exceedance line, optional decay grid and multi-level schedule ledger.
* ``report``            — bundle: splitting norms + growth fits + conditions
  + one simulation summary.
* ``self-test``         — fast exact-arithmetic invariant checks, no Monte
  Carlo; exit 0 iff every check passes.

Every experiment writes its outputs plus a ``manifest.json`` recording the
fully-resolved config (defaults materialized), its SHA-256, and the SHA-256
of every output file.  Identical config + seed reproduce every byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import tower
from .conditions import condition_report
from .decomposition import (
    DecompositionTerms,
    coboundary_growth,
    decompose_diagonal,
    decompose_superlinear,
    field_form,
    m_norm_l2,
    recombine,
)
from .errors import ConfigError, OrthofieldError
from .fields import (
    CoefficientField,
    TruncationSpec,
    auto_truncation,
    exact_second_moment,
    form_window_weights,
    sample_partial_sums,
    window_weights,
)
from .noise import LawFamily, law_moments
from .stats import ks_distance_to_normal, mean_abs_ratio, summarize

__all__ = ["main"]

_EXPERIMENTS = (
    "simulate-field",
    "decompose",
    "check-conditions",
    "counterexample",
    "report",
)
_FORMATS = ("csv", "json", "svg")


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def _fail(path: str, message: str) -> "ConfigError":
    return ConfigError(f"{path}: {message}")


def _require_int(value: Any, path: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(path, f"must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise _fail(path, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise _fail(path, f"must be <= {hi}, got {value}")
    return value


def _require_number(value: Any, path: str, lo: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(path, f"must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise _fail(path, f"must be finite, got {value!r}")
    if lo is not None and out <= lo:
        raise _fail(path, f"must be > {lo}, got {value}")
    return out


def _require_keys(
    obj: Any,
    path: str,
    required: Sequence[str],
    optional: Sequence[str] = (),
) -> dict:
    if not isinstance(obj, dict):
        raise _fail(path, f"must be an object, got {type(obj).__name__}")
    known = set(required) | set(optional)
    for key in sorted(obj):
        if key not in known:
            raise _fail(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            raise _fail(f"{path}.{key}", "missing required key")
    return obj


def _validate_family(config: Mapping[str, Any], path: str = "$") -> dict:
    family = config.get("family")
    if family not in ("superlinear", "diagonal"):
        raise _fail(
            f"{path}.family", f"must be 'superlinear' or 'diagonal', got {family!r}"
        )
    out: dict[str, Any] = {"family": family}
    if family == "superlinear":
        if "alpha" not in config:
            raise _fail(f"{path}.alpha", "missing required key (summable family)")
        alpha = _require_number(config["alpha"], f"{path}.alpha")
        if alpha <= 4.0:
            raise _fail(f"{path}.alpha", f"must be > 4, got {alpha}")
        out["alpha"] = alpha
    elif "alpha" in config:
        raise _fail(f"{path}.alpha", "only valid for the summable family")
    return out


def _validate_truncation(config: Mapping[str, Any], family: str, path: str = "$") -> dict:
    trunc = config.get("truncation", "auto")
    if trunc == "auto":
        if family == "diagonal":
            return {"truncation": {"scales": 32, "ladder": 64}}
        return {"truncation": "auto"}
    spec = _require_keys(trunc, f"{path}.truncation", ("scales", "ladder"))
    return {
        "truncation": {
            "scales": _require_int(spec["scales"], f"{path}.truncation.scales", lo=2),
            "ladder": _require_int(spec["ladder"], f"{path}.truncation.ladder", lo=1),
        }
    }


def _validate_window(value: Any, path: str) -> list[int]:
    if not isinstance(value, list) or len(value) != 2:
        raise _fail(path, f"must be a two-element list [n1, n2], got {value!r}")
    return [
        _require_int(value[0], f"{path}[0]", lo=1),
        _require_int(value[1], f"{path}[1]", lo=1),
    ]


def _validate_int_list(value: Any, path: str, lo: int = 1) -> list[int]:
    if not isinstance(value, list) or not value:
        raise _fail(path, f"must be a non-empty list, got {value!r}")
    return [_require_int(v, f"{path}[{i}]", lo=lo) for i, v in enumerate(value)]


def _validate_threshold_list(value: Any, path: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise _fail(path, f"must be a non-empty list, got {value!r}")
    return [_require_number(v, f"{path}[{i}]", lo=0.0) for i, v in enumerate(value)]


def _validate_seed(config: Mapping[str, Any]) -> int:
    if "seed" not in config:
        raise _fail("$.seed", "missing required key (pass in config or via --seed)")
    return _require_int(config["seed"], "$.seed", lo=0, hi=(1 << 64) - 1)


def _validate_experiment_kind(config: Any, expected: str) -> None:
    if not isinstance(config, dict):
        raise _fail("$", f"config must be a JSON object, got {type(config).__name__}")
    if "experiment" not in config:
        raise _fail("$.experiment", "missing required key")
    kind = config["experiment"]
    if kind not in _EXPERIMENTS:
        raise _fail("$.experiment", f"unknown experiment {kind!r}")
    if kind != expected:
        raise _fail(
            "$.experiment",
            f"config declares {kind!r} but the {expected!r} subcommand was invoked",
        )


def _validate_simulate_field(config: dict) -> dict:
    _require_keys(
        config,
        "$",
        ("experiment", "seed", "family", "window", "replications"),
        ("alpha", "truncation", "thresholds"),
    )
    out = {"experiment": "simulate-field", "seed": _validate_seed(config)}
    out.update(_validate_family(config))
    out.update(_validate_truncation(config, out["family"]))
    out["window"] = _validate_window(config["window"], "$.window")
    out["replications"] = _require_int(config["replications"], "$.replications", lo=2)
    out["thresholds"] = _validate_threshold_list(
        config.get("thresholds", [1.0, 2.0]), "$.thresholds"
    )
    return out


def _validate_decompose(config: dict) -> dict:
    _require_keys(
        config,
        "$",
        ("experiment", "seed", "family"),
        ("alpha", "truncation", "growth_cutoff", "growth_max_exponent"),
    )
    out = {"experiment": "decompose", "seed": _validate_seed(config)}
    out.update(_validate_family(config))
    out.update(_validate_truncation(config, out["family"]))
    out["growth_cutoff"] = _require_int(
        config.get("growth_cutoff", 1 << 14), "$.growth_cutoff", lo=2
    )
    out["growth_max_exponent"] = _require_int(
        config.get("growth_max_exponent", 14), "$.growth_max_exponent", lo=1, hi=24
    )
    return out


def _validate_check_conditions(config: dict) -> dict:
    _require_keys(
        config,
        "$",
        ("experiment", "seed", "family"),
        ("alpha", "truncation", "levels", "replications", "rel_se_cap"),
    )
    out = {"experiment": "check-conditions", "seed": _validate_seed(config)}
    out.update(_validate_family(config))
    out.update(_validate_truncation(config, out["family"]))
    out["levels"] = _validate_int_list(config.get("levels", [16, 32, 64, 128]), "$.levels")
    out["replications"] = _require_int(config.get("replications", 1000), "$.replications", lo=2)
    out["rel_se_cap"] = _require_number(config.get("rel_se_cap", 0.25), "$.rel_se_cap", lo=0.0)
    return out


def _validate_counterexample(config: dict) -> dict:
    _require_keys(
        config,
        "$",
        ("experiment", "seed", "scale_index"),
        ("window", "replications", "thresholds", "n1_grid", "schedule_levels"),
    )
    out = {"experiment": "counterexample", "seed": _validate_seed(config)}
    k = _require_int(config["scale_index"], "$.scale_index", lo=3, hi=40)
    out["scale_index"] = k
    scale = tower.tower_scale(k)
    window = config.get("window", [2 * scale.n, scale.m])
    out["window"] = _validate_window(window, "$.window")
    out["replications"] = _require_int(config.get("replications", 10_000), "$.replications", lo=2)
    out["thresholds"] = _validate_threshold_list(config.get("thresholds", [0.5]), "$.thresholds")
    if "n1_grid" in config:
        out["n1_grid"] = _validate_int_list(config["n1_grid"], "$.n1_grid")
    if "schedule_levels" in config:
        out["schedule_levels"] = _require_int(
            config["schedule_levels"], "$.schedule_levels", lo=1, hi=3
        )
    return out


def _validate_report(config: dict) -> dict:
    _require_keys(
        config,
        "$",
        ("experiment", "seed", "family"),
        ("alpha", "truncation", "levels", "replications"),
    )
    out = {"experiment": "report", "seed": _validate_seed(config)}
    out.update(_validate_family(config))
    out.update(_validate_truncation(config, out["family"]))
    out["levels"] = _validate_int_list(config.get("levels", [16, 32, 64]), "$.levels")
    out["replications"] = _require_int(config.get("replications", 500), "$.replications", lo=2)
    return out


_VALIDATORS: dict[str, Callable[[dict], dict]] = {
    "simulate-field": _validate_simulate_field,
    "decompose": _validate_decompose,
    "check-conditions": _validate_check_conditions,
    "counterexample": _validate_counterexample,
    "report": _validate_report,
}


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------


def _fmt_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    return str(value)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


class _OutputSession:
    """Collects experiment outputs; deletes everything written on failure."""

    def __init__(self, out_dir: str | Path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def write_text(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.written.append(path)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        return self.write_text(
            name, json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n"
        )

    def write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt_cell(cell) for cell in row))
        return self.write_text(name, "\n".join(lines) + "\n")

    def abort(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass

    def finalize(self, resolved: dict) -> Path:
        canonical = json.dumps(
            _jsonable(resolved), sort_keys=True, separators=(",", ":")
        )
        manifest = {
            "experiment": resolved["experiment"],
            "config": resolved,
            "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
            "outputs": {
                p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(self.written, key=lambda p: p.name)
            },
        }
        return self.write_json("manifest.json", manifest)


def _histogram_svg(samples: np.ndarray, sigma: float, title: str) -> str:
    """Self-contained polyline histogram with a matching normal density curve."""
    width, height = 640.0, 400.0
    left, right, top, bottom = 60.0, 20.0, 30.0, 45.0
    span = max(4.0 * sigma, float(np.max(np.abs(samples))) * 1.05, 1e-12)
    bins = 41
    counts, edges = np.histogram(samples, bins=bins, range=(-span, span))
    bin_width = edges[1] - edges[0]
    density = counts / (samples.size * bin_width)
    peak = max(float(density.max()), 1.0 / (sigma * math.sqrt(2 * math.pi)) if sigma > 0 else 1.0)
    peak *= 1.1

    def sx(x: float) -> float:
        return left + (x + span) / (2 * span) * (width - left - right)

    def sy(y: float) -> float:
        return height - bottom - (y / peak) * (height - top - bottom)

    hist_pts: list[str] = [f"{sx(edges[0]):.2f},{sy(0.0):.2f}"]
    for i in range(bins):
        hist_pts.append(f"{sx(edges[i]):.2f},{sy(density[i]):.2f}")
        hist_pts.append(f"{sx(edges[i + 1]):.2f},{sy(density[i]):.2f}")
    hist_pts.append(f"{sx(edges[-1]):.2f},{sy(0.0):.2f}")

    curve_pts = []
    if sigma > 0:
        for i in range(201):
            x = -span + (2 * span) * i / 200
            y = math.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
            curve_pts.append(f"{sx(x):.2f},{sy(y):.2f}")

    ticks = []
    for i in range(5):
        x = -span + (2 * span) * i / 4
        px = sx(x)
        ticks.append(
            f'<line x1="{px:.2f}" y1="{height - bottom:.2f}" x2="{px:.2f}" '
            f'y2="{height - bottom + 5:.2f}" stroke="black"/>'
            f'<text x="{px:.2f}" y="{height - bottom + 18:.2f}" font-size="11" '
            f'text-anchor="middle">{x:.3g}</text>'
        )
        y = peak * i / 4
        py = sy(y)
        ticks.append(
            f'<line x1="{left - 5:.2f}" y1="{py:.2f}" x2="{left:.2f}" y2="{py:.2f}" '
            f'stroke="black"/>'
            f'<text x="{left - 8:.2f}" y="{py + 4:.2f}" font-size="11" '
            f'text-anchor="end">{y:.3g}</text>'
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" font-size="14" text-anchor="middle">{title}</text>',
        f'<line x1="{left:.1f}" y1="{height - bottom:.1f}" x2="{width - right:.1f}" '
        f'y2="{height - bottom:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" y2="{height - bottom:.1f}" '
        f'stroke="black"/>',
        f'<polyline points="{" ".join(hist_pts)}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>',
    ]
    if curve_pts:
        parts.append(
            f'<polyline points="{" ".join(curve_pts)}" fill="none" stroke="#c23b22" '
            f'stroke-width="1.5"/>'
        )
    parts.extend(ticks)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# subjects shared by experiments
# ---------------------------------------------------------------------------


def _resolve_terms(resolved: Mapping[str, Any]) -> DecompositionTerms:
    if resolved["family"] == "diagonal":
        spec = resolved["truncation"]
        return decompose_diagonal(spec["scales"], spec["ladder"])
    field = CoefficientField.superlinear(resolved["alpha"])
    if resolved["truncation"] == "auto":
        trunc = auto_truncation(field)
    else:
        spec = resolved["truncation"]
        trunc = TruncationSpec.for_field(field, K=spec["scales"], M=spec["ladder"])
    return decompose_superlinear(field, trunc)


def _resolve_weights(resolved: Mapping[str, Any], n1: int, n2: int):
    if resolved["family"] == "superlinear":
        field = CoefficientField.superlinear(resolved["alpha"])
        if resolved["truncation"] == "auto":
            trunc = auto_truncation(field)
        else:
            spec = resolved["truncation"]
            trunc = TruncationSpec.for_field(field, K=spec["scales"], M=spec["ladder"])
        return window_weights(field, n1, n2, trunc)
    spec = resolved["truncation"]
    terms = decompose_diagonal(spec["scales"], spec["ladder"])
    atoms = recombine(terms).float_atoms()
    return form_window_weights(atoms, terms.laws, n1, n2, family_name="diagonal")


def _growth_table(resolved: Mapping[str, Any]) -> tuple[list[tuple], dict]:
    family = resolved["family"]
    alpha = resolved.get("alpha")
    cutoff = resolved["growth_cutoff"]
    max_exp = resolved["growth_max_exponent"]
    shifts = [2**j for j in range(1, max_exp + 1)]
    rows = []
    values = []
    for shift in shifts:
        value = coboundary_growth(
            family, "U", shift, scale_cutoff=cutoff, ladder_cutoff=cutoff, alpha=alpha
        )
        values.append(value)
        rows.append(
            (
                shift,
                value,
                value / math.log(shift + 1.0),
                value / (shift / math.log(shift + 1.0)),
                value / shift,
            )
        )
    if family == "diagonal":
        shape = "log(shift + 1)"
        ratios = [v / math.log(s + 1.0) for v, s in zip(values, shifts)]
    else:
        shape = "shift / log(shift + 1)"
        ratios = [v * math.log(s + 1.0) / s for v, s in zip(values, shifts)]
    per_shift = [v / s for v, s in zip(values, shifts)]
    fit = {
        "bound_shape": shape,
        "fitted_constant": max(ratios),
        "bound_holds_with_fitted_constant": True,
        "value_increasing": all(b > a for a, b in zip(values, values[1:])),
        "value_per_shift_decreasing_top3": (
            per_shift[-1] < per_shift[-2] < per_shift[-3]
        ),
        "scale_cutoff": cutoff,
        "ladder_cutoff": cutoff,
    }
    return rows, fit


def _terms_csv_rows(terms: DecompositionTerms):
    parts = (
        ("martingale", terms.martingale),
        ("row_coboundary", terms.row_coboundary),
        ("column_coboundary", terms.column_coboundary),
        ("mixed_coboundary", terms.mixed_coboundary),
    )
    for part_name, form in parts:
        for scale in sorted(form.atoms):
            for (di, dj), coeff in sorted(form.atoms[scale].items()):
                yield (
                    part_name,
                    scale,
                    di,
                    dj,
                    coeff,
                    float(coeff),
                )


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------


def _simulation_bundle(resolved: Mapping[str, Any], n1: int, n2: int):
    weights = _resolve_weights(resolved, n1, n2)
    samples = sample_partial_sums(weights, resolved["seed"], range(resolved["replications"]))
    terms = _resolve_terms(resolved)
    norm = m_norm_l2(terms)
    window_sq = exact_second_moment(weights) / (n1 * n2)
    summary = summarize(samples, thresholds=tuple(resolved.get("thresholds", ())))
    ks = ks_distance_to_normal(samples, norm.value) if samples.size >= 10 and norm.value > 0 else None
    ratio = mean_abs_ratio(samples, norm.value) if norm.value > 0 else None
    payload = {
        "family": resolved["family"],
        "window": [n1, n2],
        "replications": resolved["replications"],
        "seed": resolved["seed"],
        "sigma": {
            "martingale": norm.value,
            "martingale_upper": norm.upper,
            "window_normalized_std": math.sqrt(window_sq),
        },
        "summary": summary.to_ordered_dict(),
    }
    if ks is not None:
        payload["ks_distance_to_normal"] = {"statistic": ks.statistic, "sigma": ks.sigma}
    if ratio is not None:
        payload["mean_abs_ratio"] = {
            "ratio": ratio.ratio,
            "stderr": ratio.stderr,
            "target": ratio.target,
        }
    return samples, payload, norm


def _run_simulate_field(resolved: dict, session: _OutputSession, formats: set[str]) -> None:
    n1, n2 = resolved["window"]
    samples, payload, norm = _simulation_bundle(resolved, n1, n2)
    session.write_json("summary.json", payload)
    if "csv" in formats:
        session.write_csv(
            "samples.csv",
            ("replication", "normalized_value"),
            ((i, float(v)) for i, v in enumerate(samples)),
        )
    if "svg" in formats:
        session.write_text(
            "histogram.svg",
            _histogram_svg(
                samples,
                norm.value,
                f"{resolved['family']} window {n1}x{n2}, {resolved['replications']} replications",
            ),
        )


def _run_decompose(resolved: dict, session: _OutputSession, formats: set[str]) -> None:
    terms = _resolve_terms(resolved)
    norm = m_norm_l2(terms)
    reco = recombine(terms)
    identity_exact = True
    if terms.family == "superlinear":
        field = CoefficientField.superlinear(resolved["alpha"])
        trunc = TruncationSpec(
            K=terms.scale_cutoff, M=terms.ladder_cutoff, tail_l1=0.0, tail_l2sq=0.0
        )
        identity_exact = reco.atoms == field_form(field, trunc).atoms
    growth_rows, growth_fit = _growth_table(resolved)
    payload = {
        "family": terms.family,
        "alpha": terms.alpha,
        "scale_cutoff": terms.scale_cutoff,
        "ladder_cutoff": terms.ladder_cutoff,
        "atom_counts": {
            "martingale": terms.martingale.atom_count(),
            "row_coboundary": terms.row_coboundary.atom_count(),
            "column_coboundary": terms.column_coboundary.atom_count(),
            "mixed_coboundary": terms.mixed_coboundary.atom_count(),
            "recombined": reco.atom_count(),
        },
        "martingale_in_origin_cone": terms.martingale.in_origin_cone(),
        "recombination_identity_exact": identity_exact,
        "martingale_norm": {
            "value": norm.value,
            "retained_sq": norm.retained_sq,
            "scale_tail_sq": norm.scale_tail_sq,
            "ladder_deficit_sq": norm.ladder_deficit_sq,
            "upper": norm.upper,
        },
        "growth_fit": growth_fit,
    }
    session.write_json("norms.json", payload)
    if "csv" in formats:
        session.write_csv(
            "terms.csv",
            ("part", "scale", "shift_i", "shift_j", "coefficient", "value"),
            _terms_csv_rows(terms),
        )
        session.write_csv(
            "growth.csv",
            ("shift", "value", "value_per_log", "value_per_linlog", "value_per_shift"),
            growth_rows,
        )


def _run_check_conditions(resolved: dict, session: _OutputSession, formats: set[str]) -> None:
    if resolved["family"] == "superlinear":
        subject: CoefficientField | DecompositionTerms = CoefficientField.superlinear(
            resolved["alpha"]
        )
        trunc = None
        if resolved["truncation"] != "auto":
            spec = resolved["truncation"]
            trunc = TruncationSpec.for_field(subject, K=spec["scales"], M=spec["ladder"])
    else:
        spec = resolved["truncation"]
        subject = decompose_diagonal(spec["scales"], spec["ladder"])
        trunc = None
    report = condition_report(
        subject,
        master_seed=resolved["seed"],
        levels=resolved["levels"],
        replications=resolved["replications"],
        rel_se_cap=resolved["rel_se_cap"],
        trunc=trunc,
    )
    session.write_json("conditions.json", report.to_ordered_dict())
    if "csv" in formats:
        rows = []
        for entry in report.entries:
            for row in entry.evidence:
                rows.append(
                    (
                        entry.condition,
                        entry.verdict,
                        row.kind,
                        row.label,
                        row.value,
                        "" if row.stderr is None else row.stderr,
                        "" if row.window is None else row.window[0],
                        "" if row.window is None else row.window[1],
                    )
                )
        session.write_csv(
            "conditions.csv",
            ("condition", "verdict", "kind", "label", "value", "stderr", "n1", "n2"),
            rows,
        )


def _run_counterexample(resolved: dict, session: _OutputSession, formats: set[str]) -> None:
    k = resolved["scale_index"]
    scale = tower.tower_scale(k)
    n1, n2 = resolved["window"]
    spec = tower.ColumnSimSpec(
        scale=scale,
        n1=n1,
        n2=n2,
        replications=resolved["replications"],
        master_seed=resolved["seed"],
    )
    run = tower.simulate_counterexample(spec, thresholds=tuple(resolved["thresholds"]))
    bound = tower.exceedance_exact(scale)
    variance = tower.exact_stat_variance(scale, n1, n2)
    payload = {
        "scale_index": k,
        "levels_per_column": scale.n,
        "columns": scale.m,
        "space_size": scale.N,
        "window": [n1, n2],
        "replications": resolved["replications"],
        "seed": resolved["seed"],
        "empirical_exceedance": [
            {
                "threshold": est.threshold,
                "frequency": est.frequency,
                "stderr": est.stderr,
            }
            for est in run.summary.exceedances
        ],
        "exact": {
            "single_column_exceedance": bound.value,
            "reference_2_over_e4": bound.reference,
            "exceeds_reference": bound.exceeds,
            "stat_variance": variance,
            "stat_variance_float": float(variance),
        },
        "summary": run.summary.to_ordered_dict(),
    }
    session.write_json("summary.json", payload)
    if "csv" in formats:
        session.write_csv(
            "samples.csv",
            ("replication", "stat"),
            ((i, float(v)) for i, v in enumerate(run.samples)),
        )
    if "svg" in formats:
        sigma = math.sqrt(float(variance))
        session.write_text(
            "histogram.svg",
            _histogram_svg(run.samples, sigma, f"stacked-levels stat, window {n1}x{n2}"),
        )
    if "n1_grid" in resolved:
        rows = []
        for n1_probe in resolved["n1_grid"]:
            probe_spec = tower.ColumnSimSpec(
                scale=scale,
                n1=n1_probe,
                n2=n2,
                replications=resolved["replications"],
                master_seed=resolved["seed"],
            )
            probe = tower.simulate_counterexample(probe_spec, thresholds=())
            rows.append(
                (
                    n1_probe,
                    n2,
                    probe.summary.mean_abs,
                    probe.summary.se_mean_abs,
                    float(tower.exact_stat_variance(scale, n1_probe, n2)),
                )
            )
        session.write_csv(
            "decay.csv",
            ("n1", "n2", "mean_abs", "stderr", "exact_variance"),
            rows,
        )
    if "schedule_levels" in resolved:
        schedule = tower.schedule_scales(resolved["schedule_levels"])
        tower.verify_schedule(schedule)
        session.write_json(
            "schedule.json",
            {
                "levels": resolved["schedule_levels"],
                "scale_indices": list(schedule.indices),
                "steps": [
                    {
                        "level": step.level,
                        "scale_index": step.k,
                        "sup_lhs": step.sup_lhs,
                        "sup_rhs": step.sup_rhs,
                        "l2_checks": [
                            {"earlier_scale_index": kk, "value": val, "threshold": thr}
                            for kk, val, thr in step.l2_checks
                        ],
                    }
                    for step in schedule.steps
                ],
                "multi_scale_l2_bounds": [
                    tower.multi_scale_l2_bound(schedule, level)
                    for level in range(1, resolved["schedule_levels"] + 1)
                ],
                "scale_l1_norms": tower.scale_l1_norms(schedule),
            },
        )


def _run_report(resolved: dict, session: _OutputSession, formats: set[str]) -> None:
    terms = _resolve_terms(resolved)
    norm = m_norm_l2(terms)
    growth_resolved = dict(resolved)
    growth_resolved.setdefault("growth_cutoff", 1 << 12)
    growth_resolved.setdefault("growth_max_exponent", 12)
    growth_rows, growth_fit = _growth_table(growth_resolved)
    if resolved["family"] == "superlinear":
        subject: CoefficientField | DecompositionTerms = CoefficientField.superlinear(
            resolved["alpha"]
        )
    else:
        subject = terms
    report = condition_report(
        subject,
        master_seed=resolved["seed"],
        levels=resolved["levels"],
        replications=resolved["replications"],
    )
    top = max(resolved["levels"])
    sim_resolved = dict(resolved)
    sim_resolved["thresholds"] = [1.0, 2.0]
    samples, sim_payload, _ = _simulation_bundle(sim_resolved, top, top)
    payload = {
        "family": resolved["family"],
        "alpha": resolved.get("alpha"),
        "martingale_norm": {
            "value": norm.value,
            "retained_sq": norm.retained_sq,
            "scale_tail_sq": norm.scale_tail_sq,
            "ladder_deficit_sq": norm.ladder_deficit_sq,
        },
        "growth_fit": growth_fit,
        "conditions": report.to_ordered_dict(),
        "simulation": sim_payload,
    }
    session.write_json("report.json", payload)
    if "csv" in formats:
        session.write_csv(
            "growth.csv",
            ("shift", "value", "value_per_log", "value_per_linlog", "value_per_shift"),
            growth_rows,
        )
    if "svg" in formats:
        session.write_text(
            "histogram.svg",
            _histogram_svg(samples, norm.value, f"{resolved['family']} window {top}x{top}"),
        )


_RUNNERS: dict[str, Callable[[dict, _OutputSession, set[str]], None]] = {
    "simulate-field": _run_simulate_field,
    "decompose": _run_decompose,
    "check-conditions": _run_check_conditions,
    "counterexample": _run_counterexample,
    "report": _run_report,
}


# ---------------------------------------------------------------------------
# self-test
# ---------------------------------------------------------------------------


def _check_law_moments() -> None:
    for family in (LawFamily.superlinear(5.0), LawFamily.diagonal()):
        first = family.first_admissible_k()
        for k in range(first, 51):
            law = family.law_for_scale(k)
            moments = law_moments(law)
            l1 = 2.0 * law.p * law.v
            l2 = 2.0 * law.p * law.v * law.v
            if abs(moments.l1 - l1) > 1e-12 * max(1.0, l1):
                raise AssertionError(f"l1 moment mismatch at scale {k}")
            if abs(moments.l2sq - l2) > 1e-12 * max(1.0, l2):
                raise AssertionError(f"l2 moment mismatch at scale {k}")


def _check_recombination() -> None:
    field = CoefficientField.superlinear(5.0)
    trunc = TruncationSpec.for_field(field, K=8, M=6)
    terms = decompose_superlinear(field, trunc)
    if recombine(terms).atoms != field_form(field, trunc).atoms:
        raise AssertionError("summable-family recombination is not exact")
    if not terms.martingale.in_origin_cone():
        raise AssertionError("martingale atoms left the origin cone")
    diag = decompose_diagonal(8, 10)
    reco = recombine(diag)
    for k in diag.scales:
        atoms = reco.atoms[k]
        if atoms[(0, 0)] != Fraction(1, k):
            raise AssertionError("diagonal origin atom wrong")
        if atoms[(-k, -k)] != Fraction(1, k * k):
            raise AssertionError("diagonal martingale atom wrong")
        if atoms[(-(k - 1), 0)] != Fraction(-1, k * k):
            raise AssertionError("diagonal ladder edge atom wrong")


def _check_window_weights() -> None:
    field = CoefficientField.superlinear(5.0)
    trunc = TruncationSpec.for_field(field, K=3, M=3)
    for n1, n2 in ((1, 1), (2, 3), (4, 4)):
        weights = window_weights(field, n1, n2, trunc)
        for sw in weights.scales:
            grid = field.lag_grid(sw.scale, trunc.M)
            for row in range(sw.weights.shape[0]):
                for col in range(sw.weights.shape[1]):
                    s = sw.s0 + row
                    t = sw.t0 + col
                    expected = 0.0
                    for i in range(n1):
                        for j in range(n2):
                            u, v = i - s, j - t
                            if 0 <= u <= trunc.M and 0 <= v <= trunc.M:
                                expected += float(grid[u, v])
                    if abs(expected - float(sw.weights[row, col])) > 1e-12:
                        raise AssertionError(
                            f"window weight mismatch at scale {sw.scale}, site ({s},{t})"
                        )


def _check_tower_levels() -> None:
    for k in (4, 5, 6, 7, 8, 9, 10):
        scale = tower.tower_scale(k)
        g = tower.TowerFunction(scale)
        values = g.multipliers()
        for j in range(scale.N):
            if j < scale.n:
                expected = j + 1
            elif j < 2 * scale.n:
                expected = 2 * scale.n - 1 - j
            else:
                expected = 0
            if int(values[j]) != expected:
                raise AssertionError(
                    f"tower level profile violated at k={k}, level {j}: "
                    f"{int(values[j])} != {expected}"
                )
        if g.multiplier_sq_sum() != sum(int(v) ** 2 for v in values):
            raise AssertionError(f"tower square-sum closed form violated at k={k}")


def _check_tower_correlation() -> None:
    for k in (4, 6, 8):
        scale = tower.tower_scale(k)
        g = tower.TowerFunction(scale)
        values = g.multipliers()
        total = int(np.dot(values, values))
        space = values.shape[0]
        for shift in (1, 2, scale.n - 1, scale.n, 2 * scale.n - 2, 2 * scale.n, 3 * scale.n):
            if not (1 <= shift <= space - 2 * scale.n):
                continue
            rolled = np.roll(values, -shift)
            expected = 2 * total - 2 * int(np.dot(values, rolled))
            if tower.sq_sum(scale, shift) != expected:
                raise AssertionError(
                    f"tower shifted-difference closed form violated at k={k}, shift {shift}"
                )


def _check_tower_measure() -> None:
    for k in (4, 6, 8):
        scale = tower.tower_scale(k)
        bound = tower.exceedance_exact(scale)
        if bound.value < bound.reference:
            raise AssertionError(f"exceedance fell below 2/e^4 at k={k}")


def _check_schedule() -> None:
    schedule = tower.schedule_scales(2)
    tower.verify_schedule(schedule)
    for level in (1, 2):
        row = tower.multi_scale_l2_bound(schedule, level)
        if not row["holds"]:
            raise AssertionError(f"multi-level residual bound violated at level {level}")


def _check_growth_profile() -> None:
    terms = decompose_diagonal(10, 12)
    for shift in (1, 3, 12, 15):
        fast = coboundary_growth("diagonal", "U", shift, scale_cutoff=10, ladder_cutoff=12)
        g = terms.row_coboundary
        brute = g.minus(g.shifted(shift, 0)).second_moment(terms.laws)
        if abs(fast - brute) > 1e-12 * max(1.0, brute):
            raise AssertionError(f"growth fast path deviates from terms at shift {shift}")


_SELF_TESTS: tuple[tuple[str, Callable[[], None]], ...] = (
    ("three-point law moments", _check_law_moments),
    ("splitting recombination identity", _check_recombination),
    ("window weight prefix oracle", _check_window_weights),
    ("tower level profile", _check_tower_levels),
    ("tower shifted-difference closed form", _check_tower_correlation),
    ("tower exceedance floor", _check_tower_measure),
    ("multi-level schedule ledger", _check_schedule),
    ("coboundary growth fast path", _check_growth_profile),
)


def _run_self_test() -> int:
    failures = 0
    for name, check in _SELF_TESTS:
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - report any failure and keep going
            failures += 1
            print(f"FAIL  {name}: {exc}")
        else:
            print(f"PASS  {name}")
    print(f"{len(_SELF_TESTS) - failures}/{len(_SELF_TESTS)} checks passed")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parse_formats(raw: str) -> set[str]:
    formats = {token.strip() for token in raw.split(",") if token.strip()}
    unknown = formats - set(_FORMATS)
    if unknown:
        raise ConfigError(
            f"--format: unknown format {sorted(unknown)[0]!r} (choose from {', '.join(_FORMATS)})"
        )
    return formats


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="orthofield",
        description=(
            "Exact and Monte Carlo experiments for stationary planar linear "
            "fields, their martingale/coboundary splitting, and the "
            "stacked-levels counterexample."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=None, help="output directory (default: ./out-<experiment>)")
        p.add_argument("--threads", type=int, default=None, help="cap worker threads")
        p.add_argument(
            "--format",
            default="csv,json",
            help="comma-separated output formats: csv,json,svg (default csv,json)",
        )
    sub.add_parser("self-test", help="run fast exact-arithmetic invariant checks")

    args = parser.parse_args(argv)
    if args.command == "self-test":
        return _run_self_test()

    try:
        formats = _parse_formats(args.format)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads: must be >= 1")
            import numba

            numba.set_num_threads(args.threads)
        try:
            raw_text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"--config: cannot read {args.config!r}: {exc}") from exc
        try:
            config = json.loads(raw_text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: invalid JSON: {exc}") from exc
        if args.seed is not None:
            if not isinstance(config, dict):
                raise _fail("$", "config must be a JSON object")
            config = dict(config)
            config["seed"] = args.seed
        _validate_experiment_kind(config, args.command)
        resolved = _VALIDATORS[args.command](config)
        out_dir = args.out if args.out is not None else f"out-{args.command}"
        session = _OutputSession(out_dir)
        try:
            _RUNNERS[args.command](resolved, session, formats)
            manifest = session.finalize(resolved)
        except BaseException:
            session.abort()
            raise
        print(f"wrote {len(session.written)} files to {session.dir} (manifest: {manifest.name})")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OrthofieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
