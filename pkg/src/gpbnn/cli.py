"""Command-line entry point.

Subcommands: prior-sample, kernel-check, gp-fit, bnn-fit, timeseries,
rl-train, rl-eval.  Every command takes its declarative inputs from a
versioned JSON config, seeds all randomness from --seed, writes only under
--out, and validates inputs before producing any file.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import configio, gp, inference, networks, pendulum, timeseries

try:
    from importlib.metadata import version as _pkg_version

    VERSION = _pkg_version("gpbnn")
except Exception:  # pragma: no cover - source tree without install
    VERSION = "0.0.0"


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(out_dir, command, doc, seed, extra=None):
    manifest = {
        "schema_version": configio.SCHEMA_VERSION,
        "command": command,
        "config_hash": configio.config_hash(doc),
        "seed": seed,
        "version": VERSION,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid_from(doc, path="$.grid"):
    grid = doc.get("grid")
    if grid is None:
        raise configio.ConfigError(path, "missing grid specification")
    lo = grid.get("min")
    hi = grid.get("max")
    n = grid.get("n")
    if lo is None or hi is None or n is None:
        raise configio.ConfigError(path, "grid needs min, max and n")
    return np.linspace(float(lo), float(hi), int(n))


def _load_xy(path):
    if not os.path.exists(path):
        raise ValueError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise ValueError(f"{path}: expected header 'x,y'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except (ValueError, TypeError):
        raise ValueError(f"{path}: malformed rows")
    if data.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    return data[:, 0], data[:, 1]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_prior_sample(args):
    doc = configio.load_config(args.config)
    grid = _grid_from(doc)
    arch_docs = doc.get("archs")
    if not isinstance(arch_docs, list) or not arch_docs:
        raise configio.ConfigError("$.archs", "expected a non-empty list of architectures")
    specs = []
    for i, entry in enumerate(arch_docs):
        name = entry.get("name", f"arch{i}")
        arch = configio.arch_from_config(entry.get("arch", {}), f"$.archs[{i}].arch")
        specs.append((name, arch))
    out = _ensure_out(args.out)
    for name, arch in specs:
        draws = networks.sample_prior_functions(arch, grid, args.samples, args.seed)
        rows = [
            [d, repr(float(x)), repr(float(draws[d, k]))]
            for d in range(args.samples)
            for k, x in enumerate(grid)
        ]
        _write_csv(os.path.join(out, f"{name}.csv"), ["draw_id", "x", "f"], rows)
    _write_manifest(out, "prior-sample", doc, args.seed,
                    {"n_draws": args.samples, "archs": [n for n, _ in specs]})
    return 0


def cmd_kernel_check(args):
    doc = configio.load_config(args.config)
    checks = doc.get("checks")
    if not isinstance(checks, list) or not checks:
        raise configio.ConfigError("$.checks", "expected a non-empty list")
    parsed = []
    for i, c in enumerate(checks):
        name = c.get("name", f"check{i}")
        arch = configio.arch_from_config(c.get("arch", {}), f"$.checks[{i}].arch")
        kernel = configio.kernel_from_config(c.get("kernel", {}), f"$.checks[{i}].kernel")
        pairs = c.get("pairs")
        if not isinstance(pairs, list) or not pairs:
            raise configio.ConfigError(f"$.checks[{i}].pairs", "expected a non-empty list")
        parsed.append((name, arch, kernel, pairs))
    report = {"schema_version": configio.SCHEMA_VERSION, "n_samples": args.samples,
              "seed": args.seed, "checks": []}
    all_pass = True
    for name, arch, kernel, pairs in parsed:
        entries = []
        for j, (x, xp) in enumerate(pairs):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            xp = np.atleast_1d(np.asarray(xp, dtype=float))
            analytic = kernel(x, xp)
            est, sem = networks.empirical_kernel(arch, x, xp, args.samples, args.seed + j)
            z = (est - analytic) / sem if sem > 0 else float("inf") * np.sign(est - analytic)
            ok = bool(abs(est - analytic) <= 3.0 * sem)
            all_pass &= ok
            entries.append(
                {
                    "x": x.tolist(),
                    "x_prime": xp.tolist(),
                    "analytic": float(analytic),
                    "estimate": float(est),
                    "std_error": float(sem),
                    "z": float(z),
                    "pass": ok,
                }
            )
        report["checks"].append({"name": name, "pairs": entries,
                                 "pass": all(e["pass"] for e in entries)})
    report["all_pass"] = bool(all_pass)
    out = _ensure_out(args.out)
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, "kernel-check", doc, args.seed)
    return 0


def cmd_gp_fit(args):
    doc = configio.load_config(args.config)
    kernel = configio.kernel_from_config(doc.get("kernel", {}))
    sigma2_n = float(doc.get("sigma2_n", 0.01))
    x, y = _load_xy(args.data)
    grid = _grid_from(doc)
    post = gp.gp_fit(gp.GPModel(kernel, sigma2_n), x.reshape(-1, 1), y)
    mean, _ = gp.gp_predict(post, grid.reshape(-1, 1))
    std = gp.predictive_std(post, grid.reshape(-1, 1), include_noise=True)
    out = _ensure_out(args.out)
    _write_csv(
        os.path.join(out, "predictions.csv"),
        ["x", "mean", "std"],
        [[repr(float(g)), repr(float(m)), repr(float(s))] for g, m, s in zip(grid, mean, std)],
    )
    _write_manifest(out, "gp-fit", doc, args.seed,
                    {"log_marginal_likelihood": gp.gp_log_marginal(post), "jitter": post.jitter})
    return 0


def cmd_bnn_fit(args):
    doc = configio.load_config(args.config)
    arch = configio.arch_from_config(doc.get("arch", {}))
    sigma2_n = float(doc.get("sigma2_n", 0.01))
    hmc_doc = doc.get("hmc", {})
    x, y = _load_xy(args.data)
    grid = _grid_from(doc)
    result = inference.run_bnn_hmc(
        arch,
        x.reshape(-1, 1),
        y,
        sigma2_n,
        n_samples=int(hmc_doc.get("n_samples", 400)),
        n_chains=int(hmc_doc.get("n_chains", 2)),
        leapfrog_steps=int(hmc_doc.get("leapfrog_steps", 30)),
        seed=args.seed,
    )
    mean, std = inference.bnn_predictive_hmc(arch, result, grid.reshape(-1, 1), sigma2_n)
    out = _ensure_out(args.out)
    _write_csv(
        os.path.join(out, "predictions.csv"),
        ["x", "mean", "std"],
        [[repr(float(g)), repr(float(m)), repr(float(s))] for g, m, s in zip(grid, mean, std)],
    )
    with open(os.path.join(out, "chain.json"), "w") as fh:
        fh.write(inference.chain_to_json(result))
        fh.write("\n")
    _write_manifest(out, "bnn-fit", doc, args.seed,
                    {"accept_rate": result.accept_rate, "step_size": result.step_size})
    return 0


def cmd_timeseries(args):
    doc = configio.load_config(args.config)
    model_docs = doc.get("models")
    if not isinstance(model_docs, list) or not model_docs:
        raise configio.ConfigError("$.models", "expected a non-empty list")
    configs = []
    for i, m in enumerate(model_docs):
        try:
            cfg = timeseries.ModelConfig(**{**m, "seed": m.get("seed", args.seed)})
        except (TypeError, ValueError) as e:
            raise configio.ConfigError(f"$.models[{i}]", str(e))
        configs.append(cfg)
    series = timeseries.load_series(args.data)
    out = _ensure_out(args.out)
    timeseries.run_experiment(series, configs, out, seed=args.seed)
    return 0


def cmd_rl_train(args):
    doc = configio.load_config(args.config) if args.config else {"schema_version": 1}
    try:
        agent_cfg = pendulum.AgentConfig(**doc.get("agent", {}))
        env_params = pendulum.EnvParams(**doc.get("env", {}))
    except (TypeError, ValueError) as e:
        raise configio.ConfigError("$", str(e))
    out = _ensure_out(args.out)
    curve, _ = pendulum.train_run(agent_cfg, args.episodes, args.seed,
                                  env_params=env_params, out_dir=out)
    _write_manifest(out, "rl-train", doc, args.seed,
                    {"episodes": args.episodes, "kind": agent_cfg.kind,
                     "final_reward": float(curve[-1, 1])})
    return 0


def cmd_rl_eval(args):
    if not os.path.exists(args.snapshot):
        raise ValueError(f"snapshot not found: {args.snapshot}")
    agent = pendulum.load_agent(args.snapshot)
    theta_grid = np.linspace(-3.0 * np.pi, 3.0 * np.pi, 241)
    out = _ensure_out(args.out)
    for action in pendulum.TORQUES:
        q = pendulum.qvalue_slice(agent, theta_grid, theta_dot=0.0, action=action)
        tag = {-1.0: "m1", 0.0: "0", 1.0: "p1"}[action]
        _write_csv(
            os.path.join(out, f"qslice_torque_{tag}.csv"),
            ["theta", "q"],
            [[repr(float(t)), repr(float(v))] for t, v in zip(theta_grid, q)],
        )
    env = pendulum.PendulumEnv()
    returns = []
    for ep in range(5):
        state = env.reset(args.seed * 1_000_003 + ep)
        agent.active_member = 0
        total, done = 0.0, False
        while not done:
            state, r, done = env.step(pendulum.agent_act(agent, state))
            total += r
        returns.append(total)
    with open(os.path.join(out, "eval.json"), "w") as fh:
        json.dump(
            {"schema_version": configio.SCHEMA_VERSION, "kind": agent.config.kind,
             "greedy_returns": returns, "mean_return": float(np.mean(returns))},
            fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, "rl-eval", {"snapshot": os.path.basename(args.snapshot)}, args.seed)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gpbnn",
        description="Expressive network priors from kernel combinations: "
                    "prior galleries, kernel verification, GP/BNN fits, experiments.",
    )
    parser.add_argument("--version", action="version", version=f"gpbnn {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("prior-sample", help="draw prior functions over a grid")
    common(p)
    p.add_argument("--samples", type=int, default=2, help="draws per architecture")
    p.set_defaults(fn=cmd_prior_sample)

    p = sub.add_parser("kernel-check", help="verify analytic kernels against the MC oracle")
    common(p)
    p.add_argument("--samples", type=int, default=200_000)
    p.set_defaults(fn=cmd_kernel_check)

    p = sub.add_parser("gp-fit", help="exact GP regression from a kernel config")
    common(p)
    p.add_argument("--data", required=True, help="CSV with header x,y")
    p.set_defaults(fn=cmd_gp_fit)

    p = sub.add_parser("bnn-fit", help="HMC posterior for a network architecture")
    common(p)
    p.add_argument("--data", required=True, help="CSV with header x,y")
    p.set_defaults(fn=cmd_bnn_fit)

    p = sub.add_parser("timeseries", help="gap-prediction experiment")
    common(p)
    p.add_argument("--data", required=True, help="CSV with header t,y")
    p.set_defaults(fn=cmd_timeseries)

    p = sub.add_parser("rl-train", help="train a pendulum Q-ensemble")
    common(p, config_required=False)
    p.add_argument("--episodes", type=int, default=50)
    p.set_defaults(fn=cmd_rl_train)

    p = sub.add_parser("rl-eval", help="Q slices and greedy rollouts from a snapshot")
    p.add_argument("--snapshot", required=True, help="agent.json from rl-train")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_rl_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (configio.ConfigError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
