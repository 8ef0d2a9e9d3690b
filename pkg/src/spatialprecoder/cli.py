"""Config-driven command line front end.

Subcommands::

    solve   per-SNR power allocation table (modes, water level, trace)
    ber     Monte-Carlo bit-error-rate sweep
    pep     paired empirical / analytic pairwise error probability sweep
    corr    covariance matrix dump for the configured channel model
    modes   aperture diagnostics for the configured arrays

All take a JSON config (``--config``), write CSV plus a JSON run record with
the normalised config echo into ``--out``, and use human-facing units at the
boundary: angles in degrees, lengths in wavelengths, SNR in dB.

Exit codes: 0 success, 2 configuration/schema error, 3 numeric or simulation
error, 4 I/O error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .arrays import AntennaArray, config_matrix, make_uca, make_ula
from .channel import (
    channel_covariance,
    isotropic_modal_corr,
    save_complex_csv,
    uniform_limited_modal_corr,
)
from .precoder import (
    coherent_precoder,
    differential_precoder,
    eigenmodes,
)
from .scatterers import AbdiRingSpec, ChenRingSpec, abdi_covariance, chen_covariance
from .sim import (
    _atomic_write,
    AbdiScattering,
    ChenScattering,
    Experiment,
    IidScattering,
    KroneckerModalScattering,
    Trials,
    run_ber,
    run_pep,
    write_ber_csv,
    write_json,
    write_pep_csv,
)
from .stbc import build_codebook

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """Configuration file failed to load or validate."""


_APD_SCHEMA = {
    "type": ["object", "null"],
    "additionalProperties": False,
    "properties": {
        "half_width_deg": {"type": "number", "exclusiveMinimum": 0},
        "angular_spread_deg": {"type": "number", "exclusiveMinimum": 0},
        "mean_deg": {"type": "number"},
    },
}

_ARRAY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["single", "ula", "uca", "custom"]},
        "elements": {"type": "integer", "minimum": 1},
        "spacing": {"type": "number", "exclusiveMinimum": 0},
        "positions": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "number"},
            },
        },
    },
}

_SCATTERING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["iid", "kronecker_modal", "chen", "abdi"]},
        "tx": _APD_SCHEMA,
        "rx": _APD_SCHEMA,
        "ring_radius": {"type": "number", "exclusiveMinimum": 0},
        "link_distance": {"type": "number", "exclusiveMinimum": 0},
        "tx_spacings": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0},
        },
        "pair_angle_deg": {"type": "number"},
        "motion_angle_deg": {"type": "number"},
        "doppler_per_codeword": {"type": "number", "minimum": 0},
        "aoa_concentration": {"type": "number", "minimum": 0},
        "mean_aoa_deg": {"type": "number"},
        "tx_spread_deg": {"type": "number", "minimum": 0},
        "tx_spacing": {"type": "number", "minimum": 0},
        "rx_spacing": {"type": "number", "minimum": 0},
        "tx_angle_deg": {"type": "number"},
        "rx_angle_deg": {"type": "number"},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "scheme", "codebook", "tx_array", "rx_array",
                 "scattering", "snr_db"],
    "properties": {
        "schema_version": {"const": 1},
        "scheme": {"enum": ["coherent", "differential"]},
        "precoding": {"type": "boolean"},
        "codebook": {
            "type": "object",
            "additionalProperties": False,
            "required": ["design", "constellation"],
            "properties": {
                "design": {
                    "enum": ["alamouti", "rate34_3tx", "rate34_4tx",
                             "real_orthogonal_4tx"]
                },
                "constellation": {"enum": ["bpsk", "qpsk", "8psk"]},
            },
        },
        "tx_array": _ARRAY_SCHEMA,
        "rx_array": _ARRAY_SCHEMA,
        "scattering": _SCATTERING_SCHEMA,
        "snr_db": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "trials": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "codewords": {"type": "integer", "minimum": 1},
                "target_errors": {"type": "integer", "minimum": 1},
                "max_codewords": {"type": "integer", "minimum": 1},
            },
        },
        "frame_len": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "pep_pair": {
            "anyOf": [
                {"const": "min"},
                {
                    "type": "array",
                    "minItems": 2,
                    "maxItems": 2,
                    "items": {"type": "integer", "minimum": 0},
                },
            ]
        },
    },
}

_DEFAULTS = {
    "precoding": True,
    "trials": {"codewords": 10000},
    "frame_len": 100,
    "seed": 0,
    "pep_pair": "min",
}


def load_config(path):
    """Read, schema-validate and normalise a JSON config document."""
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return normalize_config(raw)


def normalize_config(raw):
    """Validate against the schema and fill defaults; idempotent."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        where = "/".join(str(p) for p in errors[0].path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {errors[0].message}")
    config = json.loads(json.dumps(raw))  # deep copy with JSON-clean types
    for key, value in _DEFAULTS.items():
        config.setdefault(key, value)
    trials = config["trials"]
    if ("codewords" in trials) == ("target_errors" in trials):
        raise ConfigError("trials must set exactly one of codewords/target_errors")
    return config


def config_digest(config):
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _build_array(spec):
    kind = spec["kind"]
    if kind == "single":
        return AntennaArray([0.0], [0.0])
    if kind in ("ula", "uca"):
        if "elements" not in spec or "spacing" not in spec:
            raise ConfigError(f"{kind} array needs 'elements' and 'spacing'")
        builder = make_ula if kind == "ula" else make_uca
        return builder(spec["elements"], spec["spacing"])
    if "positions" not in spec:
        raise ConfigError("custom array needs 'positions'")
    radii = [p[0] for p in spec["positions"]]
    azimuths = [np.deg2rad(p[1]) for p in spec["positions"]]
    return AntennaArray(radii, azimuths)


def _apd_params(apd):
    """(half-width radians, mean radians) of a uniform-limited APD block."""
    if apd is None:
        return None, 0.0
    if ("half_width_deg" in apd) == ("angular_spread_deg" in apd):
        raise ConfigError(
            "APD needs exactly one of half_width_deg / angular_spread_deg"
        )
    if "half_width_deg" in apd:
        width = np.deg2rad(apd["half_width_deg"])
    else:
        width = np.sqrt(3.0) * np.deg2rad(apd["angular_spread_deg"])
    return float(width), float(np.deg2rad(apd.get("mean_deg", 0.0)))


def _build_scattering(spec):
    kind = spec["kind"]
    if kind == "iid":
        return IidScattering()
    if kind == "kronecker_modal":
        tx_width, tx_mean = _apd_params(spec.get("tx"))
        rx_width, rx_mean = _apd_params(spec.get("rx"))
        return KroneckerModalScattering(
            tx_spread=tx_width,
            tx_mean_angle=tx_mean,
            rx_spread=rx_width,
            rx_mean_angle=rx_mean,
        )
    if kind == "chen":
        try:
            return ChenScattering(
                ChenRingSpec(
                    ring_radius=spec["ring_radius"],
                    link_distance=spec["link_distance"],
                    tx_spacings=tuple(spec["tx_spacings"]),
                    pair_angle=float(np.deg2rad(spec["pair_angle_deg"])),
                    motion_angle=float(np.deg2rad(spec.get("motion_angle_deg", 0.0))),
                    doppler=spec.get("doppler_per_codeword", 0.0),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"chen scattering is missing {exc}") from exc
    try:
        return AbdiScattering(
            AbdiRingSpec(
                aoa_concentration=spec.get("aoa_concentration", 0.0),
                mean_aoa=float(np.deg2rad(spec.get("mean_aoa_deg", 0.0))),
                motion_angle=float(np.deg2rad(spec.get("motion_angle_deg", 0.0))),
                tx_spread=float(np.deg2rad(spec.get("tx_spread_deg", 0.0))),
                tx_spacing=spec["tx_spacing"],
                rx_spacing=spec.get("rx_spacing", 0.0),
                tx_angle=float(np.deg2rad(spec.get("tx_angle_deg", 0.0))),
                rx_angle=float(np.deg2rad(spec.get("rx_angle_deg", 0.0))),
                doppler=spec.get("doppler_per_codeword", 0.0),
            )
        )
    except KeyError as exc:
        raise ConfigError(f"abdi scattering is missing {exc}") from exc


def build_experiment(config, seed_override=None, trials_override=None):
    trials_spec = config["trials"]
    if trials_override is not None:
        trials = Trials(codewords=trials_override)
    elif "codewords" in trials_spec:
        trials = Trials(codewords=trials_spec["codewords"])
    else:
        trials = Trials(
            target_errors=trials_spec["target_errors"],
            max_codewords=trials_spec.get("max_codewords", 1_000_000),
        )
    return Experiment(
        tx_array=_build_array(config["tx_array"]),
        rx_array=_build_array(config["rx_array"]),
        scattering=_build_scattering(config["scattering"]),
        design=config["codebook"]["design"],
        constellation=config["codebook"]["constellation"],
        scheme=config["scheme"],
        precoding=config["precoding"],
        snr_db=tuple(config["snr_db"]),
        trials=trials,
        frame_len=config["frame_len"],
        master_seed=config["seed"] if seed_override is None else seed_override,
    )


def _run_record(command, config, seed, outputs, results=None):
    record = {
        "command": command,
        "version": __version__,
        "seed_used": seed,
        "config": config,
        "config_sha256": config_digest(config),
        "outputs": outputs,
    }
    if results is not None:
        record["results"] = results
    return record


def _cmd_ber(config, out_dir, args):
    exp = build_experiment(config, args.seed, args.trials)
    points = run_ber(exp, threads=args.threads)
    csv_path = os.path.join(out_dir, "ber.csv")
    json_path = os.path.join(out_dir, "ber.json")
    write_ber_csv(csv_path, exp, points)
    results = [
        {
            "snr_db": p.snr_db,
            "codewords": p.codewords,
            "frames": p.frames,
            "bits": p.bits,
            "bit_errors": p.bit_errors,
            "codeword_errors": p.codeword_errors,
            "ber": p.ber,
        }
        for p in points
    ]
    write_json(
        json_path,
        _run_record("ber", config, exp.master_seed, ["ber.csv"], results),
    )
    return EXIT_OK


def _cmd_pep(config, out_dir, args):
    exp = build_experiment(config, args.seed, args.trials)
    if config["pep_pair"] == "min":
        codebook = build_codebook(exp.design, exp.constellation)
        pair = codebook.min_pair
    else:
        pair = tuple(config["pep_pair"])
    points = run_pep(exp, pair, threads=args.threads)
    csv_path = os.path.join(out_dir, "pep.csv")
    write_pep_csv(csv_path, exp, pair, points)
    results = [
        {
            "snr_db": p.snr_db,
            "trials": p.trials,
            "errors": p.errors,
            "pep": p.pep,
            "bound": p.bound,
        }
        for p in points
    ]
    record = _run_record("pep", config, exp.master_seed, ["pep.csv"], results)
    record["pair"] = list(pair)
    write_json(os.path.join(out_dir, "pep.json"), record)
    return EXIT_OK


def _cmd_solve(config, out_dir, args):
    exp = build_experiment(config, args.seed, args.trials)
    codebook = build_codebook(exp.design, exp.constellation)
    profile = eigenmodes(config_matrix(exp.tx_array), config_matrix(exp.rx_array))
    solver = coherent_precoder if exp.scheme == "coherent" else differential_precoder
    rows = []
    for snr_db in exp.snr_db:
        snr = 10.0 ** (snr_db / 10.0)
        sol = solver(profile, codebook.beta_min, snr)
        trace = float(np.trace(sol.matrix @ sol.matrix.conj().T).real)
        for i, (t_i, q_i) in enumerate(zip(profile.t, sol.allocation)):
            rows.append(
                {
                    "snr_db": snr_db,
                    "mode": i,
                    "mode_gain": t_i,
                    "power": q_i,
                    "active": int(q_i > 0),
                    "level": sol.level,
                    "water_level": 1.0 / sol.level,
                    "budget": sol.budget.value,
                    "precoder_trace": trace,
                }
            )
    csv_path = os.path.join(out_dir, "allocation.csv")
    _atomic_write(csv_path, _dict_rows_writer(rows))
    write_json(
        os.path.join(out_dir, "allocation.json"),
        _run_record("solve", config, exp.master_seed, ["allocation.csv"], rows),
    )
    return EXIT_OK


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.12g}"
    return value


def _dict_rows_writer(rows):
    def emit(handle):
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})

    return emit


def _model_covariance(config, exp):
    """Target covariance of the flattened channel for the configured model."""
    sc = exp.scattering
    if isinstance(sc, IidScattering):
        n = exp.tx_array.n_antennas * exp.rx_array.n_antennas
        return np.eye(n, dtype=complex)
    if isinstance(sc, KroneckerModalScattering):
        j_tx = config_matrix(exp.tx_array)
        j_rx = config_matrix(exp.rx_array)
        m_tx = (
            isotropic_modal_corr(j_tx.mode_order, "transmitter")
            if sc.tx_spread is None
            else uniform_limited_modal_corr(
                sc.tx_spread, sc.tx_mean_angle, j_tx.mode_order, "transmitter"
            )
        )
        m_rx = (
            isotropic_modal_corr(j_rx.mode_order, "receiver")
            if sc.rx_spread is None
            else uniform_limited_modal_corr(
                sc.rx_spread, sc.rx_mean_angle, j_rx.mode_order, "receiver"
            )
        )
        return channel_covariance(j_tx, j_rx, m_tx, m_rx)
    if isinstance(sc, ChenScattering):
        return chen_covariance(sc.spec, 0.0)
    return abdi_covariance(
        sc.spec, exp.rx_array.n_antennas, exp.tx_array.n_antennas
    )


def _cmd_corr(config, out_dir, args):
    exp = build_experiment(config, args.seed, args.trials)
    cov = _model_covariance(config, exp)
    csv_path = os.path.join(out_dir, "covariance.csv")
    save_complex_csv(csv_path, cov)
    record = _run_record("corr", config, exp.master_seed, ["covariance.csv"])
    record["shape"] = list(cov.shape)
    record["hermitian_error"] = float(np.abs(cov - cov.conj().T).max())
    record["min_eigenvalue"] = float(np.linalg.eigvalsh(cov).min())
    write_json(os.path.join(out_dir, "covariance.json"), record)
    return EXIT_OK


def _cmd_modes(config, out_dir, args):
    exp = build_experiment(config, args.seed, args.trials)
    rows = []
    for side, array in (("tx", exp.tx_array), ("rx", exp.rx_array)):
        basis = config_matrix(array)
        gram = basis.matrix @ basis.matrix.conj().T
        singulars = np.sort(np.linalg.eigvalsh(gram))[::-1]
        rank = int(np.sum(singulars > 1e-9 * singulars.max()))
        rows.append(
            {
                "side": side,
                "antennas": array.n_antennas,
                "aperture_radius": array.aperture_radius,
                "mode_order": basis.mode_order,
                "modes": basis.n_modes,
                "rank": rank,
            }
        )
    _atomic_write(os.path.join(out_dir, "modes.csv"), _dict_rows_writer(rows))
    write_json(
        os.path.join(out_dir, "modes.json"),
        _run_record("modes", config, exp.master_seed, ["modes.csv"], rows),
    )
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "ber": _cmd_ber,
    "pep": _cmd_pep,
    "corr": _cmd_corr,
    "modes": _cmd_modes,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spatialprecoder",
        description="Geometry-based spatial precoding experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON config path")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
        cmd.add_argument(
            "--trials", type=int, default=None, help="codeword count override"
        )
        cmd.add_argument("--threads", type=int, default=1, help="worker threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](config, args.out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # numeric / simulation failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
