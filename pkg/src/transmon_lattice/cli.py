"""Command-line interface.

Every stochastic subcommand requires --seed; results are written as
self-describing JSON records (config + seed + schema version embedded)
so that re-running the embedded config reproduces the payload exactly.
Optional --plot emits an SVG next to the result.  Exit codes: 0 on
success, otherwise a machine-readable error category is printed to
stderr as JSON ("config" = 2, "physics" = 3, "resource" = 4).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .device import DeviceSpec, straddling_check
from .dynamics import (
    NoiseSpec,
    protocol_acstark_ramsey,
    protocol_echo,
    protocol_ramsey,
    protocol_swap,
    protocol_t1,
    extract_anticrossing,
    swap_resonance,
)
from .errors import (
    AliasingError,
    ContractViolation,
    DimensionError,
    InconsistentSignError,
    LabelingError,
    NearPoleError,
    NearResonanceError,
    ResourceLimitError,
    SchemaError,
    SingularCouplingError,
    StiffnessError,
    UncalibratableError,
    UnknownQubitError,
)
from .fileio import (
    PUBLISHED_SUMMARY,
    load_bundled_device,
    load_device,
    record_to_dict,
    stats,
    summary_discrepancies,
    write_svg_plot,
    write_table,
)
from .fitting import FIT_FUNCTIONS
from .operators import SubsetSelection, assemble_hamiltonian
from .rb import NoiseChannel, run_rb
from .sizzle import (
    SizzleConfig,
    calibrate_cz,
    hamiltonian_tomography_pulsewidth,
    sweep_drive_landscape,
    sweep_relative_phase,
)
from .spectrum import diagonalize, zz_report
from .tomography import (
    BELL_TARGET,
    bell_state,
    bell_state_noisy,
    fidelity,
    ghz_state,
    ghz_state_noisy,
    state_tomography,
)

_CONFIG_ERRORS = (SchemaError, UnknownQubitError, ValueError, KeyError, OSError)
_PHYSICS_ERRORS = (
    AliasingError,
    ContractViolation,
    InconsistentSignError,
    LabelingError,
    NearPoleError,
    NearResonanceError,
    SingularCouplingError,
    UncalibratableError,
)
_RESOURCE_ERRORS = (DimensionError, ResourceLimitError, StiffnessError)


def _fail(category: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": {"category": category, "message": message}}) + "\n")
    return code


def _device_from(args) -> DeviceSpec:
    if args.device:
        return load_device(args.device)
    return load_bundled_device()


def _emit(args, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def _pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected a pair like Q2,Q3")
    return parts[0], parts[1]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _grid(spec: str) -> np.ndarray:
    """start:stop:count grid or comma-separated values."""
    if ":" in spec:
        start, stop, count = spec.split(":")
        return np.linspace(float(start), float(stop), int(count))
    return np.array(_float_list(spec))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlattice",
        description="Transmon-lattice simulator and calibration toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--device", help="device file (default: bundled 4x4 lattice)")
        p.add_argument("--out", help="write the result JSON here instead of stdout")
        p.add_argument("--plot", help="also write an SVG plot to this path")
        p.add_argument(
            "--format", choices=("structured", "table"), default="structured",
            help="result format: JSON record or CSV table",
        )
        p.add_argument("--seed", type=int, required=seed_required, default=None)
        p.add_argument("--levels", type=int, default=4)
        p.add_argument("--shots", type=int, default=0)

    p = sub.add_parser("spectrum", help="dressed spectrum of a qubit subset")
    common(p)
    p.add_argument("--qubits", required=True, help="comma-separated labels")
    p.add_argument("--long-range", action="store_true")

    p = sub.add_parser("zz", help="exact and perturbative ZZ for a coupled pair")
    common(p)
    p.add_argument("--pair", type=_pair, required=True)

    p = sub.add_parser("dynamics", help="T1 / Ramsey / echo protocols")
    common(p, seed_required=True)
    p.add_argument("--protocol", choices=("t1", "ramsey", "echo"), required=True)
    p.add_argument("--qubit", required=True)
    p.add_argument("--delays", type=_grid, default="0:150:40")
    p.add_argument("--detuning", type=float, default=1.0)

    p = sub.add_parser("sweep", help="swap chevron or AC-Stark Ramsey sweep")
    common(p, seed_required=True)
    p.add_argument("--kind", choices=("swap", "acstark"), required=True)
    p.add_argument("--pair", type=_pair, required=True)
    p.add_argument("--amplitudes", type=_grid, required=True)
    p.add_argument("--durations", type=_grid, default="0:2:81")
    p.add_argument("--drive-detuning", type=float, default=-60.0)
    p.add_argument("--jitter-khz", type=float, default=0.0)

    p = sub.add_parser("sizzle", help="driven-ZZ tomography, phase sweep, landscape")
    common(p, seed_required=True)
    p.add_argument("--mode", choices=("tomography", "phase", "landscape"), required=True)
    p.add_argument("--pair", type=_pair, required=True, help="control,target")
    p.add_argument("--freq", type=float, help="shared drive frequency (MHz)")
    p.add_argument("--amplitude", type=float, default=10.0)
    p.add_argument("--ratio", type=float, default=1.0)
    p.add_argument("--dphi", type=float, default=0.0)
    p.add_argument("--widths", type=_grid, default="0:3:25")
    p.add_argument("--freqs", type=_grid, help="landscape frequency grid")
    p.add_argument("--amplitudes", type=_grid, help="landscape amplitude grid")

    p = sub.add_parser("calibrate-cz", help="tune a conditional-phase gate")
    common(p, seed_required=True)
    p.add_argument("--pair", type=_pair, required=True, help="control,target")
    p.add_argument("--freq", type=float, required=True)
    p.add_argument("--amplitude", type=float, default=10.0)
    p.add_argument("--ratio", type=float, default=1.0)
    p.add_argument("--target-phase", type=float, default=math.pi)
    p.add_argument("--nu-tilde-khz", type=float, default=None,
                   help="skip measurement and calibrate from this rate")

    p = sub.add_parser("rb", help="randomized benchmarking")
    common(p, seed_required=True)
    p.add_argument("--qubits", required=True)
    p.add_argument("--simultaneous", action="store_true")
    p.add_argument("--sequences", type=int, default=16)
    p.add_argument("--lengths", type=_grid, default="2,25,50,100,250,500,750,1000")
    p.add_argument("--epc", type=float, default=None,
                   help="inject a depolarizing channel with this EPC instead of "
                        "deriving coherence-limited noise from the device")

    p = sub.add_parser("tomography", help="Bell/GHZ preparation and reconstruction")
    common(p, seed_required=True)
    p.add_argument("--state", choices=("bell", "ghz"), required=True)
    p.add_argument("--tau-g", type=float, default=0.0,
                   help="gate duration (us); 0 = ideal gates")
    p.add_argument("--t1", type=float, default=71.0)
    p.add_argument("--t2", type=float, default=51.0)

    p = sub.add_parser("fit", help="fit a CSV table (axis,value columns)")
    common(p)
    p.add_argument("--model", choices=sorted(FIT_FUNCTIONS), required=True)
    p.add_argument("--input", required=True)

    p = sub.add_parser("stats", help="column statistics of a device file")
    common(p)
    p.add_argument("--column", required=True)

    p = sub.add_parser("report", help="all published-summary comparisons")
    common(p)
    return parser


def _cmd_spectrum(args) -> dict:
    device = _device_from(args)
    labels = tuple(x.strip() for x in args.qubits.split(","))
    subset = SubsetSelection(labels, args.levels)
    h = assemble_hamiltonian(device, subset, include_long_range=args.long_range)
    spec = diagonalize(h)
    return {
        "command": "spectrum",
        "qubits": list(labels),
        "levels": args.levels,
        "energies_mhz": spec.energies.tolist(),
    }


def _cmd_zz(args) -> dict:
    device = _device_from(args)
    report = zz_report(device, args.pair, levels=args.levels)
    return {
        "command": "zz",
        "pair": list(report.pair),
        "j_mhz": report.j_input,
        "zeta_exact_khz": report.zeta_exact_khz,
        "zeta_perturbative_khz": report.zeta_perturbative_khz,
        "levels": report.levels,
    }


def _cmd_dynamics(args) -> dict:
    device = _device_from(args)
    kwargs = dict(shots=args.shots, seed=args.seed, levels=max(2, min(args.levels, 3)))
    if args.protocol == "t1":
        record = protocol_t1(device, args.qubit, args.delays, **kwargs)
        fit = FIT_FUNCTIONS["exp_decay"](record.axis("delay"), record.data["p_excited"])
    elif args.protocol == "ramsey":
        record = protocol_ramsey(
            device, args.qubit, args.delays, detuning=args.detuning, **kwargs
        )
        fit = FIT_FUNCTIONS["damped_cos"](record.axis("delay"), record.data["p_excited"])
    else:
        record = protocol_echo(device, args.qubit, args.delays, **kwargs)
        fit = FIT_FUNCTIONS["exp_decay"](record.axis("delay"), record.data["p_excited"])
    payload = record_to_dict(record)
    payload["fit"] = fit.to_dict()
    if args.plot:
        write_svg_plot(
            args.plot,
            record.axis("delay"),
            {"p_excited": record.data["p_excited"]},
            title=args.protocol,
            xlabel="delay (us)",
            ylabel="P(1)",
        )
    return payload


def _cmd_sweep(args) -> dict:
    device = _device_from(args)
    if args.kind == "swap":
        record = protocol_swap(
            device,
            args.pair,
            args.amplitudes,
            args.durations,
            drive_detuning=args.drive_detuning,
            seed=args.seed,
            levels=min(args.levels, 3),
        )
        payload = record_to_dict(record)
        payload["resonance"] = {
            k: (v if not hasattr(v, "to_dict") else v.to_dict())
            for k, v in swap_resonance(record).items()
        }
        return payload
    noise = NoiseSpec(jitter_khz={args.pair[0]: args.jitter_khz})
    record = protocol_acstark_ramsey(
        device,
        args.pair,
        args.amplitudes,
        drive_detuning=args.drive_detuning,
        noise=noise,
        seed=args.seed,
        levels=min(args.levels, 3),
    )
    payload = record_to_dict(record)
    extraction = extract_anticrossing(record)
    payload["extraction"] = {
        "j_mhz": extraction["j"],
        "freq_scatter_std_mhz": extraction["freq_scatter_std"],
        "points_used": extraction["points_used"],
        "fit": extraction["fit"].to_dict(),
    }
    if args.plot:
        write_svg_plot(
            args.plot,
            record.data["delta_model"],
            {"freq_shift": record.data["freq_shift"]},
            title="AC-Stark Ramsey",
            xlabel="detuning (MHz)",
            ylabel="shift (MHz)",
        )
    return payload


def _sizzle_config(args, device) -> SizzleConfig:
    freq = args.freq
    if freq is None:
        top = max(device.qubit(q).omega for q in args.pair)
        freq = top + 100.0
    return SizzleConfig(
        pair=args.pair,
        freq=freq,
        omega_target=args.amplitude,
        ratio=args.ratio,
        dphi=args.dphi,
    )


def _cmd_sizzle(args) -> dict:
    device = _device_from(args)
    levels = min(args.levels, 4)
    if args.mode == "tomography":
        config = _sizzle_config(args, device)
        nu, record = hamiltonian_tomography_pulsewidth(
            device, config, args.widths, seed=args.seed, levels=levels
        )
        payload = record_to_dict(record)
        payload["nu_tilde_khz"] = nu
        return payload
    if args.mode == "phase":
        config = _sizzle_config(args, device)
        dphis = np.linspace(0.0, 2 * math.pi, 16, endpoint=False)
        record = sweep_relative_phase(
            device, config, dphis, args.widths, seed=args.seed, levels=levels
        )
        from .sizzle import fit_phase_modulation

        payload = record_to_dict(record)
        payload["modulation"] = fit_phase_modulation(
            np.asarray(record.axis("dphi")), record.data["nu_tilde_khz"]
        )
        return payload
    if args.freqs is None or args.amplitudes is None:
        raise ValueError("landscape mode needs --freqs and --amplitudes")
    record = sweep_drive_landscape(
        device, args.pair, args.freqs, args.amplitudes, seed=args.seed, levels=levels
    )
    return record_to_dict(record)


def _cmd_calibrate_cz(args) -> dict:
    device = _device_from(args)
    config = SizzleConfig(
        pair=args.pair, freq=args.freq, omega_target=args.amplitude, ratio=args.ratio
    )
    calibration = calibrate_cz(
        device,
        config,
        target_phase=args.target_phase,
        seed=args.seed,
        levels=min(args.levels, 4),
        nu_tilde_khz=args.nu_tilde_khz,
    )
    return {"command": "calibrate-cz", "calibration": calibration.to_dict()}


def _cmd_rb(args) -> dict:
    device = _device_from(args)
    qubits = tuple(x.strip() for x in args.qubits.split(","))
    model = NoiseChannel.from_epc(args.epc) if args.epc is not None else device
    outcomes = run_rb(
        model,
        qubits,
        n_sequences=args.sequences,
        lengths=[int(m) for m in args.lengths],
        shots=args.shots,
        seed=args.seed,
        simultaneous=args.simultaneous,
    )
    return {
        "command": "rb",
        "simultaneous": args.simultaneous,
        "outcomes": {q: outcome.to_dict() for q, outcome in outcomes.items()},
    }


def _cmd_tomography(args) -> dict:
    if args.state == "bell":
        target = BELL_TARGET
        n = 2
        state = (
            bell_state()
            if args.tau_g == 0
            else bell_state_noisy(args.tau_g, args.t1, args.t2)
        )
    else:
        target = ghz_state()
        n = 3
        state = (
            ghz_state()
            if args.tau_g == 0
            else ghz_state_noisy(args.tau_g, args.t1, args.t2)
        )
    rho = state_tomography(state, n, shots=args.shots, seed=args.seed)
    return {
        "command": "tomography",
        "state": args.state,
        "tau_g": args.tau_g,
        "shots": args.shots,
        "seed": args.seed,
        "fidelity": fidelity(rho, target),
        "rho_real": np.real(rho).tolist(),
        "rho_imag": np.imag(rho).tolist(),
    }


def _cmd_fit(args) -> dict:
    rows = Path(args.input).read_text().strip().splitlines()
    data = np.array([[float(x) for x in line.split(",")] for line in rows[1:]])
    fit = FIT_FUNCTIONS[args.model](data[:, 0], data[:, 1])
    return {"command": "fit", "model": args.model, "result": fit.to_dict()}


def _cmd_stats(args) -> dict:
    device = _device_from(args)
    report = stats(device, args.column)
    payload = {"command": "stats", **report.to_dict()}
    if args.column in PUBLISHED_SUMMARY:
        payload["published"] = PUBLISHED_SUMMARY[args.column]
    return payload


def _cmd_report(args) -> dict:
    device = _device_from(args)
    columns = ("omega", "alpha", "t1", "t2r", "t2e", "j", "freq", "qi", "kappa_ext", "chi")
    payload = {
        "command": "report",
        "columns": {c: stats(device, c).to_dict() for c in columns},
        "published_summary": PUBLISHED_SUMMARY,
        "discrepancies": summary_discrepancies(device),
        "straddling_failures": [
            list(p)
            for p in device.nn_pairs()
            if not straddling_check(device, p[0], p[1])
        ],
    }
    return payload


_HANDLERS = {
    "spectrum": _cmd_spectrum,
    "zz": _cmd_zz,
    "dynamics": _cmd_dynamics,
    "sweep": _cmd_sweep,
    "sizzle": _cmd_sizzle,
    "calibrate-cz": _cmd_calibrate_cz,
    "rb": _cmd_rb,
    "tomography": _cmd_tomography,
    "fit": _cmd_fit,
    "stats": _cmd_stats,
    "report": _cmd_report,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        payload = _HANDLERS[args.command](args)
    except _PHYSICS_ERRORS as exc:
        return _fail("physics", str(exc), 3)
    except _RESOURCE_ERRORS as exc:
        return _fail("resource", str(exc), 4)
    except _CONFIG_ERRORS as exc:
        return _fail("config", str(exc), 2)
    if getattr(args, "format", "structured") == "table" and "axes" in payload:
        axis = payload["axes"][0]
        columns = {
            k: v for k, v in payload["data"].items() if np.ndim(v) == 1
        }
        if args.out:
            write_table(args.out, axis["name"], axis["units"], axis["values"], columns)
        else:
            sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return 0
    _emit(args, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
