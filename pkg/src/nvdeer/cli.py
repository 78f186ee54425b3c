"""Command-line pipeline: simulate | fit | report | selftest.

Configuration is layered: an optional JSON file provides values, long
flags override individual entries, and everything else falls back to
documented defaults.  Every output file carries the resolved-config
hash, the seed and the package version, so re-running a command with
identical inputs reproduces identical bytes.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from . import constants as c
from .datasets import DataSet, read_summary, write_plot_spec, write_summary
from .deer import (LorentzianPeak, P1_FIVE_LINE_AMPLITUDES,
                   population_transfer, rabi_probability)
from .dynamics import compute_sigma, ensemble_transfer, simulate_rabi
from .errors import (ConfigError, DataError, FitError, IntegrationError,
                     NumericError)
from .fitting import (DeerFixedParams, diffusion_coefficient,
                      epr_concentration, epr_double_integral,
                      fit_central_line_two_species,
                      fit_concentration_spectrum, fit_deer_decay, fit_eseem,
                      fit_hahn_decay, fit_lorentzian_peaks,
                      fit_rabi_frequency, fit_saturation)
from .hamiltonians import (apply_orientation, nv_line_table,
                           nv_offaxis_member, nv_onaxis_member, p1_ensemble,
                           p1_line_table, static_hamiltonian,
                           x_line_frequency, x_member)
from .photophysics import (PulseTrain, RateModelParams, evolve_populations,
                           ground_populations, steady_state_populations)
from .spincore import FieldConfiguration
from .trace import SpectrumTrace

__all__ = ["RunConfig", "load_config", "config_hash", "main"]

EXPERIMENTS = ("deer-spectrum", "deer-rabi", "deer-decay", "hahn", "eseem",
               "saturation", "photophysics", "diffusion", "epr")
ENGINES = ("analytic", "dynamics")


def _positive(v):
    return v > 0, "must be > 0"


def _non_negative(v):
    return v >= 0, "must be >= 0"


def _fraction(v):
    return 0 <= v < 1, "must be in [0, 1)"


def _any(v):
    return True, ""


# section -> key -> (default, converter, validator)
_SCHEMA = {
    "field": {
        "b0_mt": (37.2, float, _positive),
        "tilt_deg": (0.1, float, _any),
        "rabi_mhz": (2.0, float, _positive),
        "drive_freq_mhz": (1042.0, float, _positive),
    },
    "ensemble": {
        "n_p1_ppb": (200.0, float, _non_negative),
        "n_x_ppb": (0.0, float, _non_negative),
        "n_nv_ppb": (0.0, float, _non_negative),
        "gamma_mhz": (1.2, float, _non_negative),
        "beta": (0.03, float, _positive),
    },
    "timing": {
        "t_a_us": (20.0, float, _positive),
        "t_b_us": (0.25, float, _positive),
    },
    "sweep": {
        "f_min_mhz": (900.0, float, _positive),
        "f_max_mhz": (1190.0, float, _positive),
        "df_mhz": (0.5, float, _positive),
        "t_min_us": (0.02, float, _positive),
        "t_max_us": (3.0, float, _positive),
        "n_points": (121, int, _positive),
        "p_max_mw": (2.0, float, _positive),
    },
    "fit": {
        "n_peaks": (5, int, _positive),
        "rabi_mhz": (0.0, float, _non_negative),
        "window_mhz": (0.0, float, _non_negative),
        "two_species": (True, bool, _any),
        "x_offset_mhz": (-7.0, float, _any),
        "p_b": (0.0, float, _fraction),
        "f_init_mhz": ("", str, _any),
    },
    "decay": {
        "t2_us": (100.0, float, _positive),
        "stretch": (1.5, float, _positive),
        "k_mod": (0.35, float, _fraction),
        "gamma_n_mhz_per_t": (10.708, float, _positive),
    },
    "sample": {
        "count": (0.0, float, _non_negative),
        "r_vac_nm": (37.5, float, _positive),
        "anneal_s": (7200.0, float, _positive),
        "mass_mg": (0.0, float, _non_negative),
        "ref_di": (0.0, float, _non_negative),
        "ref_mass_mg": (0.0, float, _non_negative),
        "ref_n_ppm": (0.0, float, _non_negative),
        "f_sat_kcps": (250.0, float, _positive),
        "p_sat_mw": (0.5, float, _positive),
    },
    "run": {
        "engine": ("analytic", str, lambda v: (v in ENGINES,
                                               f"must be one of {ENGINES}")),
        "seed": (0, int, _non_negative),
        "noise": (0.0, float, _fraction),
        "dose": (0.0, float, _non_negative),
    },
}

# (command, experiment) -> config paths that must be set non-trivially
_REQUIRED = {
    ("simulate", "diffusion"): ("sample.count",),
    ("fit", "epr"): ("sample.mass_mg", "sample.ref_di",
                     "sample.ref_mass_mg", "sample.ref_n_ppm"),
}


class RunConfig:
    """Resolved run configuration; attribute access mirrors 'section.key'.

    Built by load_config from defaults, an optional JSON file, and flag
    overrides, in that order.  The canonical dict (as_dict) is what gets
    hashed into every output.
    """

    def __init__(self, experiment, sections):
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment: got {experiment!r}, must be one of "
                + ", ".join(EXPERIMENTS))
        self.experiment = experiment
        self._sections = sections
        self.out_dir = "."
        if sections["sweep"]["f_max_mhz"] <= sections["sweep"]["f_min_mhz"]:
            raise ConfigError("sweep.f_max_mhz: must exceed sweep.f_min_mhz")
        if sections["sweep"]["t_max_us"] <= sections["sweep"]["t_min_us"]:
            raise ConfigError("sweep.t_max_us: must exceed sweep.t_min_us")

    def require(self, command):
        """Check the experiment-specific required fields of a command."""
        for path in _REQUIRED.get((command, self.experiment), ()):
            sect, key = path.split(".")
            if not self._sections[sect][key]:
                raise ConfigError(f"{path}: required for '{command}' with "
                                  f"experiment '{self.experiment}'")

    def __getitem__(self, path):
        sect, key = path.split(".")
        return self._sections[sect][key]

    def as_dict(self):
        out = {"experiment": self.experiment}
        for sect in sorted(self._sections):
            out[sect] = dict(sorted(self._sections[sect].items()))
        return out

    def field_config(self):
        return FieldConfiguration(
            self["field.b0_mt"], self["field.tilt_deg"],
            self["field.rabi_mhz"], self["field.drive_freq_mhz"])

    def f_grid(self):
        s = self._sections["sweep"]
        return np.arange(s["f_min_mhz"],
                         s["f_max_mhz"] + s["df_mhz"] / 2, s["df_mhz"])

    def t_grid(self):
        s = self._sections["sweep"]
        return np.linspace(s["t_min_us"], s["t_max_us"], s["n_points"])


def _coerce(sect, key, value):
    default, conv, validator = _SCHEMA[sect][key]
    try:
        if conv is bool and isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                value = True
            elif value.lower() in ("false", "0", "no"):
                value = False
            else:
                raise ValueError(value)
        coerced = conv(value)
    except (TypeError, ValueError):
        raise ConfigError(
            f"{sect}.{key}: cannot interpret {value!r} as {conv.__name__}")
    ok, msg = validator(coerced)
    if not ok:
        raise ConfigError(f"{sect}.{key}: {msg} (got {coerced!r})")
    return coerced


def load_config(experiment=None, config_file=None, overrides=()):
    """Build a RunConfig from defaults, a JSON file and override pairs.

    overrides is an iterable of ('section.key', value) applied last;
    unknown paths raise ConfigError naming the path.
    """
    sections = {s: {k: v[0] for k, v in keys.items()}
                for s, keys in _SCHEMA.items()}
    file_experiment = None
    if config_file is not None:
        try:
            with open(config_file, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_file}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file: top level must be an object")
        for sect, val in raw.items():
            if sect == "experiment":
                file_experiment = val
                continue
            if sect not in _SCHEMA:
                raise ConfigError(f"{sect}: unknown config section")
            if not isinstance(val, dict):
                raise ConfigError(f"{sect}: must be an object")
            for key, v in val.items():
                if key not in _SCHEMA[sect]:
                    raise ConfigError(f"{sect}.{key}: unknown config key")
                sections[sect][key] = _coerce(sect, key, v)
    for path, value in overrides:
        if "." not in path:
            raise ConfigError(f"{path}: override paths look like "
                              "'section.key'")
        sect, key = path.split(".", 1)
        if sect not in _SCHEMA or key not in _SCHEMA[sect]:
            raise ConfigError(f"{path}: unknown config key")
        sections[sect][key] = _coerce(sect, key, value)
    experiment = experiment or file_experiment
    if experiment is None:
        raise ConfigError("experiment: set it via --experiment or the "
                          "config file")
    return RunConfig(experiment, sections)


def config_hash(cfg):
    """Short stable digest of the resolved configuration."""
    blob = json.dumps(cfg.as_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _meta(cfg):
    return {
        "experiment": cfg.experiment,
        "config_hash": config_hash(cfg),
        "seed": cfg["run.seed"],
        "version": __version__,
        "dose": cfg["run.dose"],
        "t_a_us": cfg["timing.t_a_us"],
        "t_b_us": cfg["timing.t_b_us"],
    }


def _run_section(cfg):
    return {
        "experiment": cfg.experiment,
        "config_hash": config_hash(cfg),
        "seed": cfg["run.seed"],
        "version": __version__,
        "dose": cfg["run.dose"],
    }


def _noise(cfg, y, rng):
    level = cfg["run.noise"]
    if level <= 0:
        return y, None
    return y + level * rng.standard_normal(len(y)), np.full(len(y), level)


def _write_dataset(cfg, name, columns, units):
    path = os.path.join(cfg.out_dir, name)
    DataSet(columns, units, _meta(cfg)).write_csv(path)
    return path


# ------------------------------------------------------------ simulate

def _p1_five_groups(field):
    """Six P1 lines collapsed to the five observed groups (two central
    lines merge within the pulse bandwidth)."""
    rows = p1_line_table(field)
    f = np.array([r[0] for r in rows])
    a = np.array([r[1] for r in rows])
    i_mid = np.argsort(np.abs(f - np.median(f)))[:2]
    mask = np.ones(len(f), bool)
    mask[i_mid] = False
    centers = np.append(f[mask], np.average(f[i_mid], weights=a[i_mid]))
    amps = np.append(a[mask], a[i_mid].sum())
    order = np.argsort(centers)
    return centers[order], amps[order]


def _spectrum_transfer(cfg, field, fgrid):
    """Per-species pump flip probabilities over the frequency grid."""
    gamma = cfg["ensemble.gamma_mhz"]
    omega = field.rabi_mhz
    t_b = cfg["timing.t_b_us"]
    if cfg["run.engine"] == "dynamics":
        pt_p1 = ensemble_transfer(p1_ensemble(merge_off_axis=True), field,
                                  fgrid, t_b)
        pt_x = ensemble_transfer([x_member()], field, fgrid, t_b)
    else:
        rows = p1_line_table(field)
        pt_p1 = population_transfer(
            [LorentzianPeak(f, gamma, a) for f, a in rows],
            omega, fgrid, t_b)
        pt_x = population_transfer(
            [LorentzianPeak(x_line_frequency(field), gamma, 1.0)],
            omega, fgrid, t_b)
    nv_rows = [r for r in nv_line_table(field)
               if r[4] != "[111]" and (r[2], r[3]) == (2, 3)]
    pt_nv = population_transfer(
        [LorentzianPeak(nv_rows[0][0], gamma, 1.0)], omega, fgrid, t_b)
    return pt_p1, pt_x, pt_nv


def _nv_sigma_table(field):
    rows = []
    for member in ("on", "off"):
        sys_m = (nv_onaxis_member() if member == "on"
                 else nv_offaxis_member())
        h0 = static_hamiltonian(sys_m, field)
        for a, b in ((1, 2), (2, 3), (1, 3)):
            rows.append((member, a, b, compute_sigma(h0, a, b)))
    return rows


def _simulate_deer_spectrum(cfg, rng):
    field = cfg.field_config()
    fgrid = cfg.f_grid()
    t_a = cfg["timing.t_a_us"]
    pt_p1, pt_x, pt_nv = _spectrum_transfer(cfg, field, fgrid)
    rate_half = c.dipolar_rate_constant(2.0, 2.0, 0.5) * t_a * c.US_TO_S
    member = nv_offaxis_member()
    sigma_nv = compute_sigma(static_hamiltonian(member, field), 2, 3)
    rate_nv = c.dipolar_rate_constant(2.0, 2.0, sigma_nv) * t_a * c.US_TO_S
    expo = rate_half * (c.ppb_to_per_m3(cfg["ensemble.n_p1_ppb"]) * pt_p1
                        + c.ppb_to_per_m3(cfg["ensemble.n_x_ppb"]) * pt_x)
    # sensor-sensor contribution: 3/4 of the NVs sit on off-axis lines
    expo = expo + rate_nv * c.ppb_to_per_m3(
        cfg["ensemble.n_nv_ppb"]) * 0.75 * pt_nv
    y, y_err = _noise(cfg, np.exp(-expo), rng)
    cols = {"f_b_mhz": fgrid, "i_deer": y}
    units = {"f_b_mhz": "MHz", "i_deer": "1"}
    if y_err is not None:
        cols["i_deer_err"] = y_err
        units["i_deer_err"] = "1"
    data_path = _write_dataset(cfg, "spectrum.csv", cols, units)

    centers, amps = _p1_five_groups(field)
    lines_p1 = {f"group_{i + 1}_mhz": float(fc)
                for i, fc in enumerate(centers)}
    lines_p1.update({f"group_{i + 1}_amp": float(aa)
                     for i, aa in enumerate(amps)})
    nv_lines = {}
    for f, el, a, b, label in nv_line_table(field):
        tag = "onaxis" if label == "[111]" else "offaxis"
        nv_lines[f"{tag}_{a}{b}_mhz"] = float(f)
    sigmas = {f"{m}axis_{a}{b}": float(s)
              for m, a, b, s in _nv_sigma_table(field)}
    b_member, _ = apply_orientation(member.orientation, field)
    pops7, n_pulses = steady_state_populations(
        RateModelParams.for_field(b_member, beta=cfg["ensemble.beta"]),
        PulseTrain())
    n123 = ground_populations(pops7)

    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "lines.p1": lines_p1,
        "lines.x": {"f_mhz": float(x_line_frequency(field))},
        "lines.nv": nv_lines,
        "sigma": sigmas,
        "populations.offaxis": {
            "n1": float(n123[0]), "n2": float(n123[1]),
            "n3": float(n123[2]), "pulses_to_steady_state": n_pulses,
        },
    })
    write_plot_spec(
        os.path.join(cfg.out_dir, "spectrum_plot.json"),
        "DEER spectrum", "pump frequency f_B (MHz)", "echo contrast I_DEER",
        [{"file": os.path.basename(data_path), "x": "f_b_mhz",
          "y": "i_deer", "label": "simulated"}])
    return 0


def _simulate_deer_rabi(cfg, rng):
    field = cfg.field_config()
    t = cfg.t_grid()
    if cfg["run.engine"] == "dynamics":
        member = x_member()
        carrier = x_line_frequency(field)
        trace = simulate_rabi(member, field.replace(drive_freq_mhz=carrier),
                              t)
        y = trace.y
    else:
        y = rabi_probability(field.rabi_mhz, 0.0, t)
    y, y_err = _noise(cfg, y, rng)
    cols = {"t_us": t, "p_flip": y}
    units = {"t_us": "us", "p_flip": "1"}
    if y_err is not None:
        cols["p_flip_err"] = y_err
        units["p_flip_err"] = "1"
    path = _write_dataset(cfg, "rabi.csv", cols, units)
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "drive": {"rabi_mhz": cfg["field.rabi_mhz"],
                  "t_pi_us": 0.5 / cfg["field.rabi_mhz"]},
    })
    write_plot_spec(os.path.join(cfg.out_dir, "rabi_plot.json"),
                    "Driven nutation", "pulse length (us)",
                    "flip probability",
                    [{"file": os.path.basename(path), "x": "t_us",
                      "y": "p_flip", "label": "simulated"}])
    return 0


def _decay_p_b(cfg, field):
    """Pump flip probability on the addressed line (defaults to the
    central P1 line unless fit.p_b overrides)."""
    if cfg["fit.p_b"] > 0:
        return cfg["fit.p_b"]
    peak = LorentzianPeak(field.drive_freq_mhz, cfg["ensemble.gamma_mhz"],
                          1.0 / 3.0)
    return float(population_transfer([peak], field.rabi_mhz,
                                     field.drive_freq_mhz,
                                     cfg["timing.t_b_us"]))


def _simulate_deer_decay(cfg, rng):
    field = cfg.field_config()
    t = np.linspace(cfg["sweep.t_min_us"], cfg["sweep.t_max_us"],
                    cfg["sweep.n_points"])
    p_b = _decay_p_b(cfg, field)
    rate = c.dipolar_rate_constant(2.0, 2.0, 0.5)
    y = np.exp(-rate * c.ppb_to_per_m3(cfg["ensemble.n_p1_ppb"]) * p_b
               * t * c.US_TO_S)
    y, y_err = _noise(cfg, y, rng)
    cols = {"t_b_delay_us": t, "i_deer": y}
    units = {"t_b_delay_us": "us", "i_deer": "1"}
    if y_err is not None:
        cols["i_deer_err"] = y_err
        units["i_deer_err"] = "1"
    path = _write_dataset(cfg, "decay.csv", cols, units)
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "decay": {"p_b": p_b, "n_p1_ppb": cfg["ensemble.n_p1_ppb"]},
    })
    write_plot_spec(os.path.join(cfg.out_dir, "decay_plot.json"),
                    "DEER decay", "pump delay T (us)", "echo contrast",
                    [{"file": os.path.basename(path), "x": "t_b_delay_us",
                      "y": "i_deer", "label": "simulated"}])
    return 0


def _simulate_hahn(cfg, rng, eseem=False):
    t = np.linspace(cfg["sweep.t_min_us"], cfg["sweep.t_max_us"],
                    cfg["sweep.n_points"])
    env = np.exp(-((t / cfg["decay.t2_us"]) ** cfg["decay.stretch"]))
    name = "hahn.csv"
    if eseem:
        f_mod = (cfg["decay.gamma_n_mhz_per_t"] * cfg["field.b0_mt"]
                 / 2.0 * 1e-3)
        env = env * (1.0 - cfg["decay.k_mod"]
                     * np.sin(np.pi * f_mod * t) ** 2)
        name = "eseem.csv"
    y, y_err = _noise(cfg, env, rng)
    cols = {"t_us": t, "echo": y}
    units = {"t_us": "us", "echo": "1"}
    if y_err is not None:
        cols["echo_err"] = y_err
        units["echo_err"] = "1"
    path = _write_dataset(cfg, name, cols, units)
    summary = {"run": _run_section(cfg),
               "decay": {"t2_us": cfg["decay.t2_us"],
                         "stretch": cfg["decay.stretch"]}}
    if eseem:
        summary["modulation"] = {
            "f_mod_mhz": f_mod,
            "gamma_n_mhz_per_t": cfg["decay.gamma_n_mhz_per_t"]}
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), summary)
    write_plot_spec(os.path.join(cfg.out_dir, name.replace(".csv",
                                                           "_plot.json")),
                    "Echo decay", "total delay (us)", "echo amplitude",
                    [{"file": os.path.basename(path), "x": "t_us",
                      "y": "echo", "label": "simulated"}])
    return 0


def _simulate_saturation(cfg, rng):
    p = np.linspace(0.0, cfg["sweep.p_max_mw"], cfg["sweep.n_points"])
    f_sat, p_sat = cfg["sample.f_sat_kcps"], cfg["sample.p_sat_mw"]
    y = f_sat * p / (p + p_sat)
    noise = cfg["run.noise"]
    y_err = None
    if noise > 0:
        y = y + noise * f_sat * rng.standard_normal(len(p))
        y_err = np.full(len(p), noise * f_sat)
    cols = {"power_mw": p, "rate_kcps": y}
    units = {"power_mw": "mW", "rate_kcps": "kcps"}
    if y_err is not None:
        cols["rate_err"] = y_err
        units["rate_err"] = "kcps"
    path = _write_dataset(cfg, "saturation.csv", cols, units)
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "saturation": {"f_sat_kcps": f_sat, "p_sat_mw": p_sat},
    })
    write_plot_spec(os.path.join(cfg.out_dir, "saturation_plot.json"),
                    "PL saturation", "laser power (mW)",
                    "count rate (kcps)",
                    [{"file": os.path.basename(path), "x": "power_mw",
                      "y": "rate_kcps", "label": "simulated"}])
    return 0


def _simulate_photophysics(cfg, rng):
    field = cfg.field_config()
    member = nv_offaxis_member()
    b_member, _ = apply_orientation(member.orientation, field)
    params = RateModelParams.for_field(b_member, beta=cfg["ensemble.beta"])
    pops7, n_pulses = steady_state_populations(params, PulseTrain())
    history = evolve_populations(
        params, PulseTrain(n_pulses=max(n_pulses, 10)))
    pulse_idx = np.arange(1, len(history) + 1, dtype=float)
    cols = {"pulse": pulse_idx}
    units = {"pulse": "1"}
    for i in range(7):
        cols[f"n{i + 1}"] = history[:, i]
        units[f"n{i + 1}"] = "1"
    path = _write_dataset(cfg, "photophysics.csv", cols, units)
    n123 = ground_populations(pops7)
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "steady_state": {"n1": float(n123[0]), "n2": float(n123[1]),
                         "n3": float(n123[2]),
                         "pulses_to_steady_state": n_pulses,
                         "beta": cfg["ensemble.beta"]},
    })
    write_plot_spec(os.path.join(cfg.out_dir, "photophysics_plot.json"),
                    "Readout polarization buildup", "laser pulse number",
                    "ground-state population",
                    [{"file": os.path.basename(path), "x": "pulse",
                      "y": f"n{i + 1}", "label": f"level {i + 1}"}
                     for i in range(3)])
    return 0


def _simulate_diffusion(cfg, rng):
    out = diffusion_coefficient(cfg["ensemble.n_nv_ppb"],
                                cfg["sample.count"],
                                cfg["sample.r_vac_nm"],
                                cfg["sample.anneal_s"])
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "diffusion": {k: float(v) for k, v in out.items()},
    })
    return 0


def _simulate_epr(cfg, rng):
    """Derivative EPR line with a known double integral, for pipeline
    tests of the quantification chain."""
    b0 = cfg["field.b0_mt"]
    width = 0.4
    b = np.linspace(b0 - 12.0, b0 + 12.0, cfg["sweep.n_points"])
    x = b - b0
    # derivative of a unit-area Lorentzian absorption line
    deriv = -(2.0 / np.pi) * width * x / (width**2 + x**2) ** 2
    scale = cfg["ensemble.n_p1_ppb"]
    y, y_err = _noise(cfg, scale * deriv, rng)
    cols = {"field_mt": b, "deriv": y}
    units = {"field_mt": "mT", "deriv": "a.u."}
    if y_err is not None:
        cols["deriv_err"] = y_err
        units["deriv_err"] = "a.u."
    path = _write_dataset(cfg, "epr.csv", cols, units)
    write_summary(os.path.join(cfg.out_dir, "summary.ini"), {
        "run": _run_section(cfg),
        "epr": {"center_mt": b0, "width_mt": width, "area": scale},
    })
    write_plot_spec(os.path.join(cfg.out_dir, "epr_plot.json"),
                    "EPR derivative spectrum", "field (mT)",
                    "dI/dB (a.u.)",
                    [{"file": os.path.basename(path), "x": "field_mt",
                      "y": "deriv", "label": "simulated"}])
    return 0


_SIMULATORS = {
    "deer-spectrum": _simulate_deer_spectrum,
    "deer-rabi": _simulate_deer_rabi,
    "deer-decay": _simulate_deer_decay,
    "hahn": lambda cfg, rng: _simulate_hahn(cfg, rng, eseem=False),
    "eseem": lambda cfg, rng: _simulate_hahn(cfg, rng, eseem=True),
    "saturation": _simulate_saturation,
    "photophysics": _simulate_photophysics,
    "diffusion": _simulate_diffusion,
    "epr": _simulate_epr,
}


def cmd_simulate(cfg):
    cfg.require("simulate")
    os.makedirs(cfg.out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg["run.seed"])
    return _SIMULATORS[cfg.experiment](cfg, rng)


# ----------------------------------------------------------------- fit

def _read_trace(path, x_col, y_col, err_col=None):
    ds = DataSet.read_csv(path)
    err = err_col if err_col and err_col in ds.columns else None
    return ds.to_trace(x_col, y_col, err)


def _fit_result_section(res):
    out = {}
    for name in res.param_names:
        out[name] = res.params[name]
        out[name + "_err"] = res.std_errors[name]
    out["residual_norm"] = res.residual_norm
    out["n_points"] = res.n_points
    out["converged"] = res.converged
    return out


def _estimate_section(est):
    out = {"species": est.species, "value_ppb": est.value_ppb,
           "uncertainty_ppb": est.uncertainty_ppb, "method": est.method,
           "is_upper_bound": est.is_upper_bound}
    if est.per_peak_values:
        for i, (v, e) in enumerate(zip(est.per_peak_values,
                                       est.per_peak_errors)):
            out[f"peak_{i + 1}_ppb"] = v
            out[f"peak_{i + 1}_err_ppb"] = e
    return out


def _fit_deer_spectrum(cfg, args):
    if not args.data:
        raise DataError("stage 1 (peak positions) input missing: pass "
                        "--data with the spectrum file")
    trace = _read_trace(args.data[0], "f_b_mhz", "i_deer", "i_deer_err")
    seed = cfg["run.seed"]
    sections = {"run": _run_section(cfg)}

    # stage 1: line positions (fit.f_init_mhz pins the starting centers
    # when the automatic dip finder is not trustworthy, e.g. overlapped
    # species)
    init = None
    if cfg["fit.f_init_mhz"]:
        try:
            init = [float(v) for v in cfg["fit.f_init_mhz"].split(",")]
        except ValueError:
            raise ConfigError("fit.f_init_mhz: expected comma-separated "
                              "frequencies") from None
        if len(init) != cfg["fit.n_peaks"]:
            raise ConfigError("fit.f_init_mhz: need one frequency per peak")
    peakset, res1 = fit_lorentzian_peaks(trace, cfg["fit.n_peaks"],
                                         init=init, seed=seed)
    sections["stage1.peaks"] = _fit_result_section(res1)
    write_summary(os.path.join(cfg.out_dir, "peaks.ini"),
                  {"run": _run_section(cfg),
                   "peaks": _fit_result_section(res1)})

    # stage 2: pump Rabi frequency
    if args.rabi_data:
        rabi_trace = _read_trace(args.rabi_data, "t_us", "p_flip",
                                 "p_flip_err")
        omega, res2 = fit_rabi_frequency(rabi_trace, seed=seed)
        sections["stage2.rabi"] = _fit_result_section(res2)
        write_summary(os.path.join(cfg.out_dir, "rabi.ini"),
                      {"run": _run_section(cfg),
                       "rabi": _fit_result_section(res2)})
    elif cfg["fit.rabi_mhz"] > 0:
        omega = cfg["fit.rabi_mhz"]
        sections["stage2.rabi"] = {"f_rabi": omega, "source": "config"}
    else:
        raise DataError(
            "stage 2 (Rabi calibration) input missing: pass --rabi-data "
            "or set fit.rabi_mhz in the config")

    # stage 3: per-line concentration fits
    n_peaks = cfg["fit.n_peaks"]
    if n_peaks == 5:
        amps = P1_FIVE_LINE_AMPLITUDES
    else:
        amps = tuple([1.0 / n_peaks] * n_peaks)
    fixed = DeerFixedParams(omega_mhz=omega, t_b_us=cfg["timing.t_b_us"],
                            t_b_delay_us=cfg["timing.t_a_us"], amps=amps)
    window = cfg["fit.window_mhz"] or None
    est_p1, res3 = fit_concentration_spectrum(trace, peakset, fixed,
                                              window_mhz=window, seed=seed)
    sections["estimate.p1"] = _estimate_section(est_p1)
    conc_sections = {"run": _run_section(cfg),
                     "estimate.p1": _estimate_section(est_p1)}
    for i, r in enumerate(res3):
        conc_sections[f"stage3.peak_{i + 1}"] = _fit_result_section(r)

    if cfg["fit.two_species"] and n_peaks == 5:
        ctr = sorted(p.f_r_mhz for p in peakset)[n_peaks // 2]
        sub = trace.window(ctr - 16.0, ctr + 12.0)
        bg = [(r.params["n_ppb"], r.params["f_r"], r.params["gamma"], a)
              for i, (r, a) in enumerate(zip(res3, amps))
              if i != n_peaks // 2]
        est_x, res_x = fit_central_line_two_species(
            sub, est_p1.value_ppb, fixed,
            x_offset_mhz=cfg["fit.x_offset_mhz"], background=bg, seed=seed)
        sections["estimate.x"] = _estimate_section(est_x)
        conc_sections["estimate.x"] = _estimate_section(est_x)
        conc_sections["stage3.central"] = _fit_result_section(res_x)

    write_summary(os.path.join(cfg.out_dir, "concentrations.ini"),
                  conc_sections)
    write_summary(os.path.join(cfg.out_dir, "report.ini"), sections)
    return 0


def _fit_simple(cfg, args, x_col, y_col, err_col, runner, out_name):
    if not args.data:
        raise DataError("fit input missing: pass --data")
    trace = _read_trace(args.data[0], x_col, y_col, err_col)
    sections = runner(trace)
    sections = {"run": _run_section(cfg), **sections}
    write_summary(os.path.join(cfg.out_dir, "report.ini"), sections)
    if out_name:
        write_summary(os.path.join(cfg.out_dir, out_name), sections)
    return 0


def _fit_dispatch(cfg, args):
    seed = cfg["run.seed"]
    if cfg.experiment == "deer-spectrum":
        return _fit_deer_spectrum(cfg, args)
    if cfg.experiment == "deer-rabi":
        def run(trace):
            omega, res = fit_rabi_frequency(trace, seed=seed)
            return {"rabi": _fit_result_section(res)}
        return _fit_simple(cfg, args, "t_us", "p_flip", "p_flip_err",
                           run, "rabi.ini")
    if cfg.experiment == "deer-decay":
        def run(trace):
            p_b = _decay_p_b(cfg, cfg.field_config())
            est, res = fit_deer_decay(trace, p_b, seed=seed)
            return {"decay": _fit_result_section(res),
                    "estimate.p1": _estimate_section(est)}
        return _fit_simple(cfg, args, "t_b_delay_us", "i_deer",
                           "i_deer_err", run, "concentrations.ini")
    if cfg.experiment == "hahn":
        def run(trace):
            res = fit_hahn_decay(trace, seed=seed)
            return {"hahn": _fit_result_section(res)}
        return _fit_simple(cfg, args, "t_us", "echo", "echo_err", run,
                           "hahn.ini")
    if cfg.experiment == "eseem":
        def run(trace):
            info, res = fit_eseem(trace, cfg["field.b0_mt"], seed=seed)
            out = _fit_result_section(res)
            out.update({k: float(v) for k, v in info.items()})
            return {"eseem": out}
        return _fit_simple(cfg, args, "t_us", "echo", "echo_err", run,
                           "eseem.ini")
    if cfg.experiment == "saturation":
        def run(trace):
            res = fit_saturation(trace, seed=seed)
            return {"saturation": _fit_result_section(res)}
        return _fit_simple(cfg, args, "power_mw", "rate_kcps", "rate_err",
                           run, "saturation.ini")
    if cfg.experiment == "epr":
        def run(trace):
            di = epr_double_integral(trace.x, trace.y)
            n_ppb = epr_concentration(di, cfg["sample.mass_mg"],
                                      cfg["sample.ref_di"],
                                      cfg["sample.ref_mass_mg"],
                                      cfg["sample.ref_n_ppm"])
            return {"epr": {"double_integral": float(di),
                            "n_ppb": float(n_ppb)}}
        return _fit_simple(cfg, args, "field_mt", "deriv", "deriv_err",
                           run, "epr.ini")
    raise ConfigError(
        f"experiment: '{cfg.experiment}' has no fit stage; it is "
        "simulate/report only")


def cmd_fit(cfg, args):
    cfg.require("fit")
    os.makedirs(cfg.out_dir, exist_ok=True)
    return _fit_dispatch(cfg, args)


# -------------------------------------------------------------- report

def cmd_report(args):
    if not args.results:
        raise DataError("report needs at least one result file")
    rows = []
    diffusion = []
    for path in args.results:
        sections = read_summary(path)
        run = sections.get("run", {})
        dose = float(run.get("dose", 0.0))
        for name, body in sections.items():
            if name.startswith("estimate"):
                rows.append({
                    "species": body.get("species", "?"),
                    "dose": dose,
                    "value_ppb": float(body.get("value_ppb", "nan")),
                    "err_ppb": float(body.get("uncertainty_ppb", "nan")),
                    "upper": body.get("is_upper_bound", "False") == "True",
                    "file": path,
                })
            elif name == "diffusion":
                diffusion.append((path, body))
    lines = []
    for species in sorted({r["species"] for r in rows}):
        lines.append(f"[{species}]")
        lines.append(f"{'dose':>12s} {'n (ppb)':>12s} {'err (ppb)':>12s}  "
                     "file")
        for r in sorted((r for r in rows if r["species"] == species),
                        key=lambda r: r["dose"]):
            bound = " (upper bound)" if r["upper"] else ""
            lines.append(f"{r['dose']:12.4g} {r['value_ppb']:12.4g} "
                         f"{r['err_ppb']:12.4g}  {r['file']}{bound}")
        lines.append("")
    for path, body in diffusion:
        lines.append(f"[diffusion] {path}")
        for key in sorted(body):
            lines.append(f"  {key} = {body[key]}")
        lines.append("")
    text = "\n".join(lines).rstrip() + "\n" if lines else "no estimates\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


# ------------------------------------------------------------ selftest

def cmd_selftest(args):
    from . import selftest
    names = args.checks.split(",") if args.checks else None
    try:
        results = selftest.run_all(names, printer=print)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n_fail = sum(not r.passed for r in results)
    total = sum(r.runtime_s for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed "
          f"({total:.1f} s total)")
    return 0 if n_fail == 0 else 4


# ----------------------------------------------------------------- cli

def _add_config_flags(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--experiment", "-e", choices=EXPERIMENTS,
                        help="experiment type (overrides the config file)")
    parser.add_argument("--out", default=".",
                        help="output directory (default: current)")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--noise", type=float,
                        help="relative Gaussian noise level for simulate")
    parser.add_argument("--engine", choices=ENGINES,
                        help="spectrum engine: closed-form or propagator")
    parser.add_argument("--b0-mt", type=float, help="field magnitude (mT)")
    parser.add_argument("--rabi-mhz", type=float,
                        help="pump Rabi frequency (MHz)")
    parser.add_argument("--t-a-us", type=float,
                        help="dipolar evolution window T_A (us)")
    parser.add_argument("--t-b-us", type=float,
                        help="pump pulse length t_B (us)")
    parser.add_argument("--dose", type=float,
                        help="irradiation dose label carried into reports")
    parser.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override any other config entry")


def _overrides_from_args(args):
    pairs = []
    direct = {
        "seed": "run.seed", "noise": "run.noise", "engine": "run.engine",
        "b0_mt": "field.b0_mt", "rabi_mhz": "field.rabi_mhz",
        "t_a_us": "timing.t_a_us", "t_b_us": "timing.t_b_us",
        "dose": "run.dose",
    }
    for attr, path in direct.items():
        val = getattr(args, attr, None)
        if val is not None:
            pairs.append((path, val))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected SECTION.KEY=VALUE")
        path, _, value = item.partition("=")
        pairs.append((path.strip(), value.strip()))
    return pairs


def _build_config(args):
    cfg = load_config(args.experiment, args.config,
                      _overrides_from_args(args))
    cfg.out_dir = args.out
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nvdeer",
        description="Simulate and fit pulsed double-resonance defect "
                    "spectra in diamond.")
    parser.add_argument("--version", action="version",
                        version=f"nvdeer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate",
                           help="generate synthetic datasets and summaries")
    _add_config_flags(p_sim)

    p_fit = sub.add_parser("fit", help="run the staged fit pipeline")
    _add_config_flags(p_fit)
    p_fit.add_argument("--data", nargs="+",
                       help="input dataset file(s) (CSV)")
    p_fit.add_argument("--rabi-data",
                       help="nutation dataset for the Rabi stage")

    p_rep = sub.add_parser("report", help="consolidate fit reports")
    p_rep.add_argument("results", nargs="*",
                       help="report.ini / concentrations.ini files")
    p_rep.add_argument("--out", help="also write the table to this file")

    p_self = sub.add_parser("selftest", help="run the acceptance suite")
    p_self.add_argument("--checks",
                        help="comma-separated subset of check names")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(_build_config(args))
        if args.command == "fit":
            return cmd_fit(_build_config(args), args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "selftest":
            return cmd_selftest(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, IntegrationError, FitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
