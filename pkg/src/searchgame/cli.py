"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 solver did not converge.
Reports are canonical JSON on stdout (``--format csv`` for sweeps).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time

import numpy as np

from . import __version__, kernels, markov
from .equilibrium import (
    DEFAULT_EPSILON,
    NonConvergenceError,
    NotApplicableError,
    SizeLimitError,
    WrongGameError,
    best_response_dynamics,
    brute_force_equilibria,
    deterministic_equilibria,
    symmetric_equilibrium_beta1_proportional,
    symmetric_equilibrium_proportional,
    verify_epsilon_nash,
)
from .game import InvalidGameError
from .instance import (
    Instance,
    InstanceError,
    canonical_dumps,
    digest,
    load_json_file,
    load_json_text,
    profile_from_json,
    profile_to_json,
)
from .rules import (
    RuleConfigError,
    RuleDomainError,
    check_convex,
    check_cross_concave,
    check_monotone,
    check_non_indifferent,
    InducedMarkov,
    make_rule,
)
from .scenarios import CATALOG, ScenarioRangeError, generate
from .welfare import price_of_anarchy, price_of_stability, social_optimum

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(text):
    v = float(text)
    if not v > 0.0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--epsilon", type=_positive, default=DEFAULT_EPSILON)
    common.add_argument("--format", choices=["json", "csv", "text"], default="json")
    common.add_argument("--out", help="write the main artifact to this path")
    common.add_argument("--timing", action="store_true", help="include wall time in the report")

    p = _Parser(prog="searchgame", description="Competitive search engine games.")
    p.add_argument("--version", action="version", version=f"searchgame {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scenario", parents=[common], help="generate a named instance")
    s.add_argument("--list", action="store_true")
    s.add_argument("--name", choices=sorted(CATALOG))
    s.add_argument("--k", type=int)
    s.add_argument("--pages", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--rule")
    s.add_argument("--perturbation", type=float)
    s.add_argument("--gamma", type=_floats)
    s.add_argument("--profile-out", help="write the claimed equilibrium profile here")

    s = sub.add_parser("solve", parents=[common], help="compute an equilibrium")
    s.add_argument("--instance", required=True)
    s.add_argument(
        "--method", choices=["closed-form", "best-response", "brute-force"], default="closed-form"
    )
    s.add_argument("--grid", type=int, default=12)
    s.add_argument("--max-rounds", type=int, default=200)

    s = sub.add_parser("verify", parents=[common], help="check a profile for epsilon-Nash")
    s.add_argument("--instance", required=True)
    s.add_argument("--profile", required=True)

    s = sub.add_parser("poa", parents=[common], help="optimum, equilibria, PoA and PoS")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance")
    src.add_argument("--scenario", choices=sorted(CATALOG))
    s.add_argument("--equilibria", help="profile file or {'profiles': [...]}")
    s.add_argument("--pages", type=_ints, help="sweep sizes for --scenario")
    s.add_argument("--k", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--opt-mode", choices=["auto", "top_k", "exhaustive", "greedy"], default="auto")

    s = sub.add_parser("markov", parents=[common], help="Markov user model quantities")
    m = s.add_mutually_exclusive_group(required=True)
    m.add_argument("--model", help="JSON with 'success' and 'failure' matrices")
    m.add_argument("--switch", type=int, metavar="K", help="built-in switch-on-failure model")
    s.add_argument("--q", type=_floats, required=True)

    s = sub.add_parser("rulecheck", parents=[common], help="sampled rule property checks")
    r = s.add_mutually_exclusive_group(required=True)
    r.add_argument("--rule")
    r.add_argument("--instance")
    s.add_argument("--k", type=int)
    s.add_argument("--params", help="rule parameters as JSON")
    s.add_argument("--grid-step", type=float, default=1 / 16)
    s.add_argument("--samples", type=int, default=200)
    return p


# -- helpers -------------------------------------------------------------------


def _versions():
    return {"searchgame": __version__, "numpy": np.__version__, "backend": kernels.BACKEND}


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise InstanceError(path, exc.strerror or str(exc)) from None


def _profile_report(game, W, report):
    return {
        "profile": profile_to_json(game, W)["strategies"],
        "welfare": game.welfare(W),
        "verification": report.to_json() if report is not None else None,
    }


def _proportional_closed_form(inst: Instance):
    game = inst.game()
    if not game.singleton or inst.rule.name != "proportional":
        raise NotApplicableError("closed form covers the singleton game with the proportional rule")
    p = game.gamma.page_probs()
    if game.beta == 1.0:
        q = symmetric_equilibrium_beta1_proportional(p)
        return np.array([q.probs] * game.k), {"lambda_prime": 1.0, "z": 0.0}
    state, cert = symmetric_equilibrium_proportional(p, game.beta, game.k)
    extra = dict(state.to_json(), hessian=cert.to_json())
    del extra["page_probs"]
    return np.array([state.page_probs.probs] * game.k), extra


# -- commands ------------------------------------------------------------------


def cmd_scenario(args):
    if args.list:
        rows = [
            {"name": s.name, "description": s.description, "defaults": s.defaults, "condition": s.condition}
            for s in CATALOG.values()
        ]
        return {"scenarios": rows}, None
    if not args.name:
        raise UsageError("scenario needs --name or --list")
    spec = CATALOG[args.name]
    params = {
        key: getattr(args, key)
        for key in ("k", "pages", "beta", "rule", "perturbation", "gamma")
        if getattr(args, key) is not None
    }
    if "seed" in spec.defaults:
        params["seed"] = args.seed
    bad = sorted(set(params) - set(spec.defaults))
    if bad:
        raise UsageError(f"scenario {args.name} does not take {', '.join('--' + b for b in bad)}")
    inst, claims = generate(args.name, **params)
    data = inst.to_json()
    if args.out:
        _write(args.out, canonical_dumps(data))
    if args.profile_out:
        if "equilibrium" not in claims:
            raise UsageError(f"scenario {args.name} has no claimed profile")
        _write(args.profile_out, canonical_dumps({"strategies": claims["equilibrium"]}))
    return {"name": args.name, "params": params, "instance": data, "claims": claims}, data


def cmd_solve(args):
    inst = Instance.load(args.instance)
    game = inst.game()
    result = {"method": args.method}
    if args.method == "closed-form":
        W, extra = _proportional_closed_form(inst)
        report = verify_epsilon_nash(game, W, args.epsilon, seed=args.seed)
        result.update(extra)
        result.update(_profile_report(game, W, report))
        chosen = W
    elif args.method == "best-response":
        W, rounds = best_response_dynamics(
            game, epsilon=args.epsilon, max_rounds=args.max_rounds, seed=args.seed
        )
        report = verify_epsilon_nash(game, W, args.epsilon, seed=args.seed)
        result["rounds"] = rounds
        result.update(_profile_report(game, W, report))
        chosen = W
    else:
        found = brute_force_equilibria(game, args.grid, args.epsilon, seed=args.seed)
        result["grid"] = args.grid
        result["equilibria"] = [_profile_report(game, W, r) for W, r in found]
        chosen = found[0][0] if found else None
    if args.out and chosen is not None:
        _write(args.out, canonical_dumps(profile_to_json(game, chosen)))
    return result, inst.to_json()


def cmd_verify(args):
    inst = Instance.load(args.instance)
    game = inst.game()
    W = profile_from_json(game, load_json_file(args.profile), args.profile)
    report = verify_epsilon_nash(game, W, args.epsilon, seed=args.seed)
    result = report.to_json()
    result["welfare"] = game.welfare(W)
    return result, inst.to_json()


def _load_equilibria(game, path):
    data = load_json_file(path)
    if isinstance(data, dict) and "profiles" in data:
        if not isinstance(data["profiles"], list):
            raise InstanceError(f"{path}.profiles", "expected a list")
        return [
            profile_from_json(game, d, f"{path}.profiles[{j}]") for j, d in enumerate(data["profiles"])
        ]
    return [profile_from_json(game, data, path)]


def _analyse(inst: Instance, args, given=None, claimed=None):
    game = inst.game()
    candidates = []
    if given is not None:
        candidates = [(W, verify_epsilon_nash(game, W, args.epsilon, seed=args.seed)) for W in given]
    else:
        try:
            candidates = deterministic_equilibria(
                game, args.epsilon, seed=args.seed, up_to_relabeling=True
            )
        except SizeLimitError:
            candidates = []
        extra = []
        if claimed is not None:
            extra.append(np.asarray(claimed, dtype=float))
        try:
            extra.append(_proportional_closed_form(inst)[0])
        except (NotApplicableError, ArithmeticError):
            pass
        for W in extra:
            if any(np.allclose(W, C) for C, _ in candidates):
                continue
            rep = verify_epsilon_nash(game, W, args.epsilon, seed=args.seed)
            if rep.is_equilibrium:
                candidates.append((W, rep))
    verified = [(W, r) for W, r in candidates if r.is_equilibrium]
    opt = social_optimum(game, args.opt_mode)
    out = {
        "opt": opt.to_json(),
        "equilibria": [_profile_report(game, W, r) for W, r in candidates],
        "equilibrium_welfares": [game.welfare(W) for W, _ in verified],
    }
    if verified:
        out["status"] = "ok"
        out["poa"] = price_of_anarchy(game, [W for W, _ in verified], opt)
        out["pos"] = price_of_stability(game, [W for W, _ in verified], opt)
    else:
        out["status"] = "no_equilibrium"
        out["poa"] = out["pos"] = None
    if given is None:
        out["search"] = "deterministic profiles plus closed-form/claimed symmetric candidates"
    return out


def cmd_poa(args):
    if args.instance:
        if args.pages:
            raise UsageError("--pages needs --scenario")
        inst = Instance.load(args.instance)
        given = _load_equilibria(inst.game(), args.equilibria) if args.equilibria else None
        return _analyse(inst, args, given), inst.to_json()
    if args.equilibria:
        raise UsageError("--equilibria needs --instance")
    spec = CATALOG[args.scenario]
    sizes = args.pages or [spec.defaults.get("pages")]
    if None in sizes:
        raise UsageError(f"scenario {args.scenario} has no page-count parameter")
    rows = []
    for N in sizes:
        params = {"pages": N}
        for key in ("k", "beta"):
            if getattr(args, key) is not None:
                params[key] = getattr(args, key)
        if "seed" in spec.defaults:
            params["seed"] = args.seed
        inst, claims = generate(args.scenario, **params)
        res = _analyse(inst, args, claimed=claims.get("equilibrium"))
        rows.append(
            {
                "pages": N,
                "opt_welfare": res["opt"]["welfare"],
                "worst_equilibrium_welfare": min(res["equilibrium_welfares"], default=None),
                "best_equilibrium_welfare": max(res["equilibrium_welfares"], default=None),
                "poa": res["poa"],
                "pos": res["pos"],
                "status": res["status"],
            }
        )
    return {"scenario": args.scenario, "rows": rows}, None


def _markov_convexity(model, seed):
    rule = InducedMarkov(model)
    try:
        return check_convex(rule, seed=seed).to_json()
    except markov.ReducibleChainError:
        # boundary q can split models that never leave after success
        return check_convex(rule, seed=seed, open_rest=True).to_json()


def cmd_markov(args):
    if args.model:
        data = load_json_file(args.model)
        if not isinstance(data, dict) or "success" not in data or "failure" not in data:
            raise InstanceError(args.model, "expected an object with 'success' and 'failure'")
        try:
            model = markov.MarkovUserModel(data["success"], data["failure"])
        except markov.ReducibleChainError as exc:
            raise InstanceError(args.model, str(exc)) from None
        except ValueError as exc:
            raise InstanceError(args.model, str(exc)) from None
    else:
        if args.switch < 2:
            raise UsageError("--switch needs at least 2 engines")
        model = markov.switch_on_failure_model(args.switch)
    q = np.asarray(args.q)
    if q.size != model.num_engines:
        raise UsageError(f"--q needs {model.num_engines} values, got {q.size}")
    pi = markov.stationary(model, q)
    closed = markov.closed_form_stationary(model, q)
    per = []
    for i in range(model.num_engines):
        rt = markov.return_times(model, q, i)
        d1, d2 = markov.stationary_derivatives(model, q, i)
        per.append(
            {
                "engine": i,
                "r_success": rt.r_success,
                "r_failure": rt.r_failure,
                "d_share": d1,
                "d2_share": d2,
            }
        )
    result = {
        "q": q.tolist(),
        "stationary": pi.tolist(),
        "closed_form": closed.tolist(),
        "max_abs_difference": float(np.abs(pi - closed).max()),
        "engines": per,
        "monotone": markov.check_markov_monotone(model, seed=args.seed).to_json(),
        "convex": _markov_convexity(model, args.seed),
    }
    return result, model.to_json()


def cmd_rulecheck(args):
    if args.instance:
        rule = Instance.load(args.instance).rule
    else:
        if args.k is None:
            raise UsageError("--rule needs --k")
        params = load_json_text(args.params, "--params") if args.params else {}
        rule = make_rule(args.rule, args.k, params)
    reports = [
        check_monotone(rule, grid_step=args.grid_step, samples=args.samples, seed=args.seed),
        check_non_indifferent(rule, grid_step=args.grid_step, samples=args.samples, seed=args.seed),
        check_convex(rule, grid_step=args.grid_step, samples=args.samples, seed=args.seed),
        check_cross_concave(rule, samples=args.samples, seed=args.seed),
    ]
    return {"rule": rule.to_json(), "properties": [r.to_json() for r in reports]}, rule.to_json()


COMMANDS = {
    "scenario": cmd_scenario,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "poa": cmd_poa,
    "markov": cmd_markov,
    "rulecheck": cmd_rulecheck,
}


def _csv(result) -> str:
    rows = result.get("rows")
    if rows is None:
        raise UsageError("--format csv is only available for tabular output (poa --scenario)")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else (format(v, ".17g") if isinstance(v, float) else v)) for k, v in row.items()})
    return buf.getvalue()


def _text(result) -> str:
    if "engines" not in result or "stationary" not in result:
        raise UsageError("--format text is only available for markov")
    lines = [f"{'engine':>6} {'q':>10} {'pi':>12} {'r_success':>12} {'r_failure':>12} {'d_share':>12} {'d2_share':>12}"]
    cell = lambda v: f"{'-':>12}" if v is None else f"{v:12.6g}"
    for row, q, pi in zip(result["engines"], result["q"], result["stationary"]):
        lines.append(
            f"{row['engine']:>6} {q:10.6g} {pi:12.6g} {cell(row['r_success'])} {cell(row['r_failure'])}"
            f" {cell(row['d_share'])} {cell(row['d2_share'])}"
        )
    for key in ("monotone", "convex"):
        rep = result[key]
        lines.append(f"{key}: passed={rep['passed']} strict={rep.get('strict')}")
    return "\n".join(lines) + "\n"


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "scenario" and args.list and args.name:
            raise UsageError("--list and --name are exclusive")
        start = time.perf_counter()
        result, subject = COMMANDS[args.command](args)
        elapsed = time.perf_counter() - start
        if args.format == "csv":
            stdout.write(_csv(result))
            return EXIT_OK
        if args.format == "text":
            stdout.write(_text(result))
            return EXIT_OK
        report = {
            "command": argv,
            "results": result,
            "versions": _versions(),
            "instance_digest": digest(subject) if subject is not None else None,
        }
        if args.timing:
            report["wall_time"] = elapsed
        stdout.write(canonical_dumps(report))
        return EXIT_OK
    except NonConvergenceError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_NONCONVERGENCE
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_INVALID
    except InstanceError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (
        InvalidGameError,
        RuleConfigError,
        RuleDomainError,
        ScenarioRangeError,
        NotApplicableError,
        WrongGameError,
        SizeLimitError,
        markov.ReducibleChainError,
        ArithmeticError,
        ValueError,
    ) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
