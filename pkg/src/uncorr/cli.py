"""Command line entry point.

    uncorr COMMAND [--config FILE] [--key value ...]

COMMAND is one of ``solve``, ``mms``, ``convergence``, ``positivity``.
The config file is flat ``key = value`` text; ``#`` starts a comment and
blank lines are ignored. Every key is also a ``--key`` flag and flags win
over the file. Exit codes: 0 ok, 2 configuration error, 3 positivity
condition violated, 4 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass

from .grid import write_field_csv
from .linsolve import Method, SolverError
from .model import CorrelationBand, MarketParams, Scenario
from .pricing import TP_IDS, make_tp
from .stepper import ConditionViolation, SolverConfig, integrate

COMMANDS = ("solve", "mms", "convergence", "positivity")


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _meshes(s: str) -> tuple:
    out = tuple(int(x) for x in str(s).split(",") if x.strip())
    if not out or any(n < 3 for n in out):
        raise ValueError("meshes must be a comma list of integers >= 3")
    return out


def _dt(s: str):
    v = str(s).strip().lower()
    if v in ("h2", "rt-equality"):
        return v
    x = float(v)
    if not x > 0:
        raise ValueError("dt must be positive")
    return x


def _positive(s):
    x = float(s)
    if not x > 0:
        raise ValueError("must be positive")
    return x


# key -> (parser, default, help)
KEYS = {
    "problem": (lambda s: _choice(s, TP_IDS), "tp1", "built-in problem id"),
    "sigma1": (_positive, 0.2, "volatility of asset 1"),
    "sigma2": (_positive, 0.2, "volatility of asset 2"),
    "r": (float, 0.0953102, "interest rate"),
    "D1": (float, 0.0487902, "dividend yield of asset 1"),
    "D2": (float, 0.0, "dividend yield of asset 2"),
    "rho1": (float, -0.2, "lower correlation bound"),
    "rho2": (float, 0.6, "upper correlation bound"),
    "scenario": (lambda s: Scenario(s.lower()).value, "worst", "worst or best"),
    "E": (_positive, 100.0, "strike"),
    "w1": (_positive, 1.0, "weight of asset 1"),
    "w2": (_positive, 1.0, "weight of asset 2"),
    "cap": (_positive, 10.0, "cap of the capped problems"),
    "L_W": (_positive, 1 / 200, "lower S1 bound"),
    "L_E": (_positive, 200.0, "upper S1 bound"),
    "L_S": (_positive, 1 / 200, "lower S2 bound"),
    "L_N": (_positive, 200.0, "upper S2 bound"),
    "T": (lambda s: _nonneg(s), 2.0, "maturity (mms default 0.5)"),
    "N": (lambda s: _int_at_least(s, 3), 81, "nodes per direction"),
    "dt": (_dt, "h2", "h2, rt-equality or a number"),
    "domain": (lambda s: _choice(s.upper(), ("A", "B")), "A", "mms domain A or B"),
    "meshes": (_meshes, None, "comma list of mesh sizes"),
    "out": (str, "out", "output directory"),
    "method": (lambda s: Method(s.lower()).value, "iterative", "iterative or direct"),
    "tol": (_positive, 1e-12, "relative residual tolerance"),
    "max_iter": (lambda s: _int_at_least(s, 1), 10_000, "Gauss-Seidel sweep limit"),
    "enforce": (_bool, True, "abort on positivity-condition violations"),
    "land_on_T": (_bool, True, "shorten the last step to end exactly at T"),
    "literal_strikes": (_bool, False, "use the literal spread strikes for tp3/tp5"),
    "epsilon": (_positive, 1e-30, "gradient-ratio regularization"),
    "workers": (lambda s: _int_at_least(s, 1), 1, "worker processes for mesh sweeps"),
}


def _choice(s, options):
    if s not in options:
        raise ValueError(f"expected one of {', '.join(options)}")
    return s


def _nonneg(s):
    x = float(s)
    if not x >= 0:
        raise ValueError("must be non-negative")
    return x


def _int_at_least(s, lo):
    x = int(s)
    if x < lo:
        raise ValueError(f"must be an integer >= {lo}")
    return x


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None, source=None):
        super().__init__(message)
        self.key, self.line, self.source = key, line, source


def _norm_key(k: str) -> str:
    k = k.strip().replace("-", "_")
    for known in KEYS:
        if known.lower() == k.lower():
            return known
    return k


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into ``{key: (raw value, line number)}``."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=n, source=source)
        k, v = (p.strip() for p in line.split("=", 1))
        key = _norm_key(k)
        if key not in KEYS and key != "command":
            raise ConfigError(f"unknown key {k!r}", key=k, line=n, source=source)
        if key in out:
            raise ConfigError(f"duplicate key {k!r}", key=k, line=n, source=source)
        out[key] = (v, n)
    return out


@dataclass
class JobConfig:
    command: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None


def build_job(command: str | None, file_entries: dict, overrides: dict, source: str = "<config>") -> JobConfig:
    entries = dict(file_entries)
    if command is None:
        if "command" not in entries:
            raise ConfigError("no command given")
        command = entries["command"][0]
    entries.pop("command", None)
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}", key="command")
    values = {}
    for key, (parser, default, _) in KEYS.items():
        if key in overrides and overrides[key] is not None:
            raw, line, src = overrides[key], None, "flag"
        elif key in entries:
            raw, line = entries[key]
            src = source
        else:
            values[key] = default
            continue
        try:
            values[key] = parser(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value {raw!r} for {key}: {exc}", key=key, line=line, source=src) from None
    if command == "mms" and "T" not in entries and overrides.get("T") is None:
        values["T"] = 0.5
    if values["meshes"] is None:
        values["meshes"] = (21, 41, 81, 161) if command == "mms" else (21, 41, 81, 161, 321)
    try:
        CorrelationBand(values["rho1"], values["rho2"], values["scenario"])
        MarketParams(values["sigma1"], values["sigma2"], values["r"], values["D1"], values["D2"])
    except ValueError as exc:
        raise ConfigError(str(exc), source=source) from None
    if command == "convergence":
        ms = values["meshes"]
        if any(b != 2 * a - 1 for a, b in zip(ms[:-1], ms[1:])):
            raise ConfigError("convergence meshes must satisfy N_next = 2N - 1", key="meshes", source=source)
    return JobConfig(command, values)


def _solver_config(job: JobConfig, enforce: bool | None = None) -> SolverConfig:
    dt = job.dt
    if isinstance(dt, float):
        policy, value = "explicit", dt
    else:
        policy, value = dt, None
    from .limiter import RatioConfig
    return SolverConfig(dt_policy=policy, dt=value,
                        enforce_positivity_conditions=job.enforce if enforce is None else enforce,
                        ratio=RatioConfig(job.epsilon), method=job.method, tol=job.tol,
                        max_iter=job.max_iter, land_on_T=job.land_on_T)


def _spec(job: JobConfig):
    params = MarketParams(job.sigma1, job.sigma2, job.r, job.D1, job.D2)
    band = CorrelationBand(job.rho1, job.rho2, job.scenario)
    return make_tp(job.problem, E=job.E, w1=job.w1, w2=job.w2, cap=job.cap,
                   domain=(job.L_W, job.L_E, job.L_S, job.L_N), params=params, band=band,
                   T=job.T, literal_paper_strikes=job.literal_strikes)


def _summary_lines(report) -> list:
    scale = max(1.0, report.max_norm)
    return [
        f"problem={report.problem} N1={report.mesh.N1} N2={report.mesh.N2} dt={report.dt:.16g} steps={len(report.steps)}",
        f"tau_final={report.tau_final:.16g}",
        f"min_u={report.min_value:.16g} max_norm={report.max_norm:.16g}",
        f"positivity={'pass' if report.min_value >= -1e-12 * scale else 'fail'}",
        "p1={} p2={} p3={} p4={}".format(*("pass" if all(getattr(s, p) for s in report.steps) else "fail"
                                            for p in ("p1", "p2", "p3", "p4"))),
        f"slack={'pass' if report.all_slack else 'fail'}",
    ]


def run_job(job: JobConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    os.makedirs(job.out, exist_ok=True)
    if job.command in ("solve", "positivity"):
        problem = _spec(job).to_log_problem()
        mesh = problem.mesh(job.N)
        config = _solver_config(job)
        u, report = integrate(problem, mesh, config)
        report.write_csv(os.path.join(job.out, "steps.csv"))
        lines = _summary_lines(report)
        if job.command == "solve":
            write_field_csv(u, os.path.join(job.out, "surface.csv"))
        else:
            lines.append("min_history=" + ",".join(f"{v:.16g}" for v in
                                                   [report.initial_min] + [s.min_u for s in report.steps]))
        with open(os.path.join(job.out, "summary.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print("\n".join(lines), file=stdout)
        return 0

    from .verify import run_mms, self_convergence
    if job.command == "mms":
        band = CorrelationBand(job.rho1, job.rho2, job.scenario)
        params = MarketParams(job.sigma1, job.sigma2, job.r, job.D1, job.D2)
        rep = run_mms(job.domain, band, job.meshes, job.T, _solver_config(job, enforce=False), params,
                      workers=job.workers)
    else:
        problem = _spec(job).to_log_problem()
        rep = self_convergence(problem, job.meshes, _solver_config(job), workers=job.workers)
    rep.write_csv(os.path.join(job.out, "convergence.csv"))
    table = rep.table()
    with open(os.path.join(job.out, "convergence.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table, file=stdout)
    return 0


def _error_line(kind: str, message: str, **extra) -> str:
    parts = [f"error: kind={kind}"]
    for k, v in extra.items():
        if v is not None:
            parts.append(f"{k}={v}")
    parts.append('message="' + str(message).replace('"', "'") + '"')
    return " ".join(parts)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uncorr", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("-v", "--verbose", action="store_true")
    for key, (_, default, help_) in KEYS.items():
        flags = [f"--{key}"]
        if key.replace("_", "-") != key:
            flags.append(f"--{key.replace('_', '-')}")
        ap.add_argument(*flags, dest=key, default=None, help=f"{help_} (default {default})")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        entries = {}
        source = "<flags>"
        if args.config:
            source = args.config
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}", source=args.config) from None
            entries = parse_config_text(text, args.config)
        overrides = {k: getattr(args, k) for k in KEYS}
        job = build_job(args.command, entries, overrides, source)
    except ConfigError as exc:
        print(_error_line("config", exc, source=exc.source, line=exc.line, key=exc.key), file=sys.stderr)
        return 2
    try:
        return run_job(job)
    except ConditionViolation as exc:
        print(_error_line("condition", exc), file=sys.stderr)
        return 3
    except SolverError as exc:
        print(_error_line("solver", exc), file=sys.stderr)
        return 4
    except ValueError as exc:
        print(_error_line("config", exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
