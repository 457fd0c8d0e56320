"""Command-line front end.

Every subcommand reads a system file (``--system``) or a recorded experiment
bundle (``--bundle``), writes its artefacts under ``--output-dir`` (default
``$DDC_OUTPUT_DIR`` or ``./ddc_out``) and prints a short text summary.
Values in a ``--config`` JSON file override the corresponding flags.

Exit codes: 0 ok, 1 usage, 2 numeric refusal, 3 infeasible, 4 internal,
5 a ``--query``-ed verdict is false (or the campaign disagreed).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    AUTO,
    data_report,
    identify_type,
    model_finite_eigenvalues,
    oracle_report,
    oracle_type,
)
from .campaign import run_campaign
from .errors import (
    AmbiguousSpectrum,
    BadShift,
    DegenerateCertificate,
    DegenerateData,
    DescriptorError,
    InsufficientHorizon,
    InvalidMatrix,
    LmiInfeasible,
    NothingToStabilize,
    NotRegular,
)
from .experiments import (
    ExperimentConfig,
    SimulatedPlant,
    assemble_data_matrices,
    run_experiment1,
    run_experiment2,
    run_experiment3,
)
from .io import (
    default_output_dir,
    dumps,
    load_bundle,
    load_system,
    save_bundle,
    write_json,
    write_table,
    write_trajectory,
)
from .linalg import finite_generalized_eigenvalues
from .model import is_regular, simulate, slow_fast_decompose
from .stabilization import EPS_PD, SYM_TOL, certify_closed_loop, stabilize

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_INFEASIBLE, EXIT_INTERNAL, EXIT_QUERY = 0, 1, 2, 3, 4, 5

# flags a --config file may set
CONFIG_KEYS = ("system", "bundle", "s0", "l", "T", "seed", "noise_scale", "delta", "noise_mode",
               "rank_tol", "sym_tol", "eps_pd", "output_dir", "steps", "count", "start", "workers")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numeric refusals here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _delta(text):
    return AUTO if str(text).lower() == AUTO else float(text)


def _rank_tol(text):
    return AUTO if str(text).lower() == AUTO else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddc", description="Data-driven analysis and stabilization of descriptor systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--system", help="system JSON with E, A, B")
    common.add_argument("--bundle", help="recorded experiment bundle directory (instead of --system)")
    common.add_argument("--config", help="JSON file whose keys override these flags")
    common.add_argument("--s0", type=float, default=0.5, help="real shift (default 0.5)")
    common.add_argument("-l", "--l", type=int, default=4, help="Experiment-1 length (default 4)")
    common.add_argument("-T", "--T", type=int, default=None, help="Experiment-3 length")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--noise-scale", type=float, default=0.0, help="uniform noise amplitude")
    common.add_argument("--delta", type=_delta, default=AUTO, help="noise threshold or 'auto'")
    common.add_argument("--noise-mode", choices=["off", "threshold"], default=None,
                        help="default: threshold when --noise-scale > 0")
    common.add_argument("--rank-tol", type=_rank_tol, default=AUTO, help="absolute rank tolerance or 'auto'")
    common.add_argument("--sym-tol", type=float, default=SYM_TOL)
    common.add_argument("--eps-pd", type=float, default=EPS_PD)
    common.add_argument("-o", "--output-dir", default=None)
    common.add_argument("--format", choices=["text", "json"], default="text", help="stdout format")
    common.add_argument("--timings", action="store_true", help="add wall-clock timings to the report")
    common.add_argument("--query", action="append", default=[],
                        help="verdict that must hold (descriptor, normal, c, causal, y, r); exit 5 otherwise")

    s = sub.add_parser("simulate", parents=[common], help="simulate the system and write a trajectory CSV")
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--input", choices=["zero", "random"], default="random")
    s.add_argument("--x0", choices=["zero", "random"], default="random", help="free slow initial state")
    i = sub.add_parser("identify", parents=[common], help="normal or descriptor, from Experiment 1")
    i.add_argument("--sweep", default=None,
                   help="comma-separated l values; writes singular values of M against l to sv_vs_l.csv")
    for name, text in [("exp1", "run Experiment 1 and save the bundle"),
                       ("exp2", "run Experiment 2 and save the bundle"),
                       ("exp3", "run Experiment 3 and save the bundle"),
                       ("controllability", "C / causal / Y / R verdicts from Experiments 1-2"),
                       ("stabilize", "stabilizing gain from all three experiments"),
                       ("verify", "compare data verdicts with the known model")]:
        sub.add_parser(name, parents=[common], help=text)
    c = sub.add_parser("campaign", parents=[common], help="randomized data-vs-model agreement check")
    c.add_argument("--count", type=int, default=100)
    c.add_argument("--start", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    return p


def apply_config_file(args) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    data = json.loads(path.read_text())
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in data.items():
        if k == "delta":
            v = _delta(v)
        if k == "rank_tol":
            v = _rank_tol(v)
        setattr(args, k, v)
    return args


def run_config(args) -> dict:
    """The echo of everything that determines the outputs."""
    keys = ["system", "bundle", "s0", "l", "T", "seed", "noise_scale", "delta", "noise_mode",
            "rank_tol", "sym_tol", "eps_pd"]
    return {k: getattr(args, k, None) for k in keys}


def _exp_config(args) -> ExperimentConfig:
    return ExperimentConfig(s0=args.s0, l=args.l, T=args.T, seed=args.seed)


def _plant(args):
    if not args.system:
        raise UsageError("this command needs --system")
    path = Path(args.system)
    if not path.exists():
        raise UsageError(f"system file {path} not found")
    sys_ = load_system(path)
    return sys_, SimulatedPlant(sys_, noise_scale=args.noise_scale)


class Session:
    """Lazily runs (or loads) each experiment once per command."""

    def __init__(self, args):
        self.args = args
        self.config = _exp_config(args)
        self.system = None
        self.plant = None
        self.e1 = self.e2 = self.e3 = None
        self.timings = {}
        if args.bundle:
            bdir = Path(args.bundle)
            if not bdir.is_dir():
                raise UsageError(f"bundle directory {bdir} not found")
            self.config, self.e1, self.e2, self.e3 = load_bundle(bdir)
            if args.system:
                self.system, self.plant = _plant(args)
        elif args.system:
            self.system, self.plant = _plant(args)
        else:
            raise UsageError("give --system or --bundle")

    def _timed(self, name, fn):
        t0 = time.perf_counter()
        out = fn()
        self.timings[name] = time.perf_counter() - t0
        return out

    def _need_plant(self, what):
        if self.plant is None:
            raise UsageError(f"the bundle has no {what} and there is no --system to run it")
        return self.plant

    def exp1(self):
        if self.e1 is None:
            plant = self._need_plant("Experiment 1")
            self.e1 = self._timed("exp1", lambda: run_experiment1(plant, self.config))
        return self.e1

    def exp2(self):
        if self.e2 is None:
            plant = self._need_plant("Experiment 2")
            self.e2 = self._timed("exp2", lambda: run_experiment2(plant, self.config))
        return self.e2

    def exp3(self):
        if self.e3 is None:
            plant = self._need_plant("Experiment 3")
            self.e3 = self._timed("exp3", lambda: run_experiment3(plant, self.config))
        return self.e3


def _noise_mode(args) -> str:
    if args.noise_mode:
        return args.noise_mode
    return "threshold" if args.noise_scale > 0 else "off"


def _type_verdict(args, e1):
    mode = _noise_mode(args)
    if mode == "off":
        if args.rank_tol == AUTO:
            return identify_type(e1.M, scale=e1.scale)
        return identify_type(e1.M, noise_mode="threshold", delta=args.rank_tol)
    return identify_type(e1.M, noise_mode="threshold", delta=args.delta)


def _data_matrices(session, tv):
    return assemble_data_matrices(session.exp1(), session.exp2(), rank_M=tv.rank_E_estimate,
                                  cond_cap=session.config.cond_cap)


def _verdict_flags(kind=None, verdicts=None) -> dict:
    out = {}
    if kind is not None:
        out["descriptor"] = kind == "descriptor"
        out["normal"] = kind == "normal"
    if verdicts:
        out.update(c=verdicts["c_controllable"], causal=verdicts["causal"],
                   y=verdicts["y_controllable"], r=verdicts["r_controllable"])
    return out


def _report(args, command, body, session=None) -> dict:
    rep = {"artifact_version": __version__, "command": command, "config": run_config(args)}
    rep.update(body)
    if args.timings and session is not None:
        rep["timings"] = session.timings
    return rep


def _out_dir(args) -> Path:
    return Path(args.output_dir) if args.output_dir else default_output_dir()


# --- commands -------------------------------------------------------------------

def cmd_simulate(args):
    sys_, _ = _plant(args)
    reg = is_regular(sys_, seed=args.seed)
    if not reg.regular:
        raise NotRegular("pencil is singular at every sampled shift")
    sf = slow_fast_decompose(sys_, reg.shift)
    rng = np.random.default_rng(args.seed)
    if args.steps < 1:
        raise InsufficientHorizon("--steps must be >= 1")
    L = args.steps + sf.index_h
    u = np.zeros((L, sys_.m)) if args.input == "zero" else rng.uniform(-1, 1, (L, sys_.m))
    x0s = np.zeros(sf.n1) if args.x0 == "zero" else rng.uniform(-1, 1, sf.n1)
    traj = simulate(sys_, sf, x0s, u, noise_scale=args.noise_scale, seed=args.seed)
    out = _out_dir(args)
    path = write_trajectory(traj, out / "trajectory.csv")
    res = float(np.abs(traj.residuals(sys_)).max()) if traj.length else 0.0
    body = {"trajectory": str(path), "steps": traj.length, "n1": sf.n1, "n2": sf.n2,
            "index_h": sf.index_h, "max_residual": res}
    return _report(args, "simulate", body), {}


def cmd_exp(args, which):
    session = Session(args)
    e1 = session.exp1() if which == 1 else None
    e2 = session.exp2() if which == 2 else None
    e3 = session.exp3() if which == 3 else None
    out = _out_dir(args)
    save_bundle(out, session.config, e1, e2, e3)
    body = {"bundle": str(out)}
    if e1 is not None:
        body.update(cond_N=e1.cond_N, cond_W=e1.cond_W, attempts=e1.attempts)
    if e3 is not None:
        body.update(T=e3.T)
    return _report(args, f"exp{which}", body, session), {}


def cmd_identify(args):
    session = Session(args)
    tv = _type_verdict(args, session.exp1())
    out = _out_dir(args)
    body = {"type": tv.to_dict()}
    if getattr(args, "sweep", None):
        plant = session._need_plant("sweep data")
        try:
            ls = [int(v) for v in str(args.sweep).split(",")]
        except ValueError:
            raise UsageError(f"--sweep expects integers, got {args.sweep!r}") from None
        rows = []
        for l in ls:
            cfg = ExperimentConfig(s0=session.config.s0, l=l, seed=session.config.seed)
            sv = np.linalg.svd(run_experiment1(plant, cfg).M, compute_uv=False)
            rows.append([l] + [float(v) for v in sv])
        n = plant.n
        body["sweep"] = str(write_table(out / "sv_vs_l.csv", ["l"] + [f"sigma_{k + 1}" for k in range(n)], rows))
    rep = _report(args, "identify", body, session)
    write_json(out / "report.json", rep)
    return rep, _verdict_flags(tv.kind)


def _controllability(args, session):
    tv = _type_verdict(args, session.exp1())
    d = _data_matrices(session, tv)
    cr = data_report(d, tv.rank_E_estimate, args.rank_tol)
    return tv, d, cr


def cmd_controllability(args):
    session = Session(args)
    tv, d, cr = _controllability(args, session)
    body = {"type": tv.to_dict(), "ranks": cr.ranks(), "verdicts": cr.verdicts(),
            "controllability": cr.to_dict(), "cond_N": d.cond_N, "cond_W": d.cond_W}
    rep = _report(args, "controllability", body, session)
    write_json(_out_dir(args) / "report.json", rep)
    return rep, _verdict_flags(tv.kind, cr.verdicts())


def cmd_stabilize(args):
    session = Session(args)
    tv = _type_verdict(args, session.exp1())
    d = _data_matrices(session, tv)
    e3 = session.exp3()
    res = session._timed("lmi", lambda: stabilize(d, e3, eps_pd=args.eps_pd))
    if res.sym_residual > args.sym_tol:
        raise DegenerateCertificate(f"symmetry residual {res.sym_residual:.2e} above {args.sym_tol:g}")
    out = _out_dir(args)
    gains = res.to_dict()
    write_json(out / "gains.json", gains)
    body = {"type": tv.to_dict(), "gains": gains}
    if session.system is not None:
        cl = certify_closed_loop(session.system, res.K, seed=args.seed)
        write_trajectory(cl.trajectory, out / "closed_loop.csv")
        body["closed_loop"] = cl.to_dict()
    rep = _report(args, "stabilize", body, session)
    write_json(out / "report.json", rep)
    return rep, _verdict_flags(tv.kind)


def _match_eigs(a, b) -> float:
    """Largest distance after greedy nearest matching of two multisets."""
    a, b = list(np.asarray(a, complex)), list(np.asarray(b, complex))
    if len(a) != len(b):
        return float("inf")
    worst = 0.0
    for z in a:
        j = int(np.argmin([abs(z - w) for w in b]))
        worst = max(worst, abs(z - b[j]))
        b.pop(j)
    return worst


def cmd_verify(args):
    session = Session(args)
    if session.system is None:
        raise UsageError("verify needs --system (the true model)")
    sys_ = session.system
    tv, d, cr = _controllability(args, session)
    orc = oracle_report(sys_, args.s0)
    data_v = {"type": tv.kind, **cr.verdicts()}
    model_v = {"type": oracle_type(sys_), **orc.verdicts()}
    data_eigs = finite_generalized_eigenvalues(d.D_E, d.s0).values
    model_eigs = model_finite_eigenvalues(sys_, args.s0)
    eig_err = _match_eigs(data_eigs, model_eigs)
    agree = {k: data_v[k] == model_v[k] for k in data_v}
    body = {
        "data": {"verdicts": data_v, "ranks": cr.ranks()},
        "model": {"verdicts": model_v, "ranks": orc.ranks()},
        "agreement": {**agree, "all": all(agree.values())},
        "finite_eigenvalues": {"data": np.sort_complex(data_eigs), "model": np.sort_complex(model_eigs),
                               "max_mismatch": eig_err},
    }
    rep = _report(args, "verify", body, session)
    write_json(_out_dir(args) / "report.json", rep)
    flags = _verdict_flags(tv.kind, cr.verdicts())
    flags["agree"] = all(agree.values())
    return rep, flags


def cmd_campaign(args):
    t0 = time.perf_counter()
    summary = run_campaign(args.count, args.start, args.s0, args.l, args.workers)
    body = summary.to_dict()
    if args.timings:
        body["timings"] = {"campaign": time.perf_counter() - t0}
    rep = _report(args, "campaign", body)
    write_json(_out_dir(args) / "campaign.json", rep)
    return rep, {"agree": summary.agreement == 1.0}


COMMANDS = {
    "simulate": cmd_simulate,
    "exp1": lambda a: cmd_exp(a, 1),
    "exp2": lambda a: cmd_exp(a, 2),
    "exp3": lambda a: cmd_exp(a, 3),
    "identify": cmd_identify,
    "controllability": cmd_controllability,
    "stabilize": cmd_stabilize,
    "verify": cmd_verify,
    "campaign": cmd_campaign,
}


def summarize(rep: dict) -> str:
    """Human-readable lines for the text output."""
    lines = [f"{rep['command']} (ddc {rep['artifact_version']})"]
    if "type" in rep:
        t = rep["type"]
        lines.append(f"type: {t['kind']}  rank(M) = {t['rank_E_estimate']}  method = {t['method']}")
        lines.append("singular values of M: " + ", ".join(f"{v:.4g}" for v in t["singular_values"]))
    if "ranks" in rep:
        for k, r in rep["ranks"].items():
            lines.append(f"{k:>15}: {'yes' if rep['verdicts'][k] else 'no':>3}  rank {r}")
    if "gains" in rep:
        g = rep["gains"]
        lines.append(f"K = {g['K']}")
        lines.append(f"rho(A_cl) = {g['spectral_radius']:.6g}  lmi min eig = {g['lmi_min_eig']:.3g}")
    if "closed_loop" in rep:
        c = rep["closed_loop"]
        lines.append(f"closed loop: max |finite eig| = {c['max_modulus']:.6g}  "
                     f"||x_end|| / ||x_0|| = {c['decay_ratio']:.3g}")
    if "agreement" in rep and isinstance(rep["agreement"], dict):
        a = rep["agreement"]
        lines.append("agreement: " + ", ".join(f"{k}={'ok' if v else 'MISMATCH'}" for k, v in a.items()))
        lines.append(f"finite eigenvalue mismatch: {rep['finite_eigenvalues']['max_mismatch']:.3g}")
    if rep["command"] == "campaign":
        lines.append(f"agreement {rep['agreement']:.1%} over {rep['count']} systems")
    for key in ("trajectory", "bundle"):
        if key in rep:
            lines.append(f"wrote {rep[key]}")
    return "\n".join(lines)


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = apply_config_file(args)
        rep, flags = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, InvalidMatrix, InsufficientHorizon, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AmbiguousSpectrum, DegenerateData, NotRegular, BadShift) as exc:
        print(f"refused: {type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, AmbiguousSpectrum):
            print("singular values: " + ", ".join(f"{v:.4g}" for v in exc.singular_values), file=sys.stderr)
        return EXIT_REFUSED
    except (LmiInfeasible, NothingToStabilize, DegenerateCertificate) as exc:
        print(f"infeasible: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DescriptorError, Exception) as exc:  # noqa: BLE001 - last-resort mapping
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    print(dumps(rep), end="") if args.format == "json" else print(summarize(rep))
    for q in args.query:
        key = q.lower()
        if key not in flags:
            print(f"usage error: verdict {q!r} not available for {args.command}", file=sys.stderr)
            return EXIT_USAGE
        if not flags[key]:
            return EXIT_QUERY
    if args.command == "campaign" and not flags["agree"]:
        return EXIT_QUERY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
