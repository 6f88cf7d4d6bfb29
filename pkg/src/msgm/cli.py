"""Command-line experiment driver.

Subcommands: train, sample, nll, eval, field, inpaint, reconstruct, ablate.
Common flags: --config PATH, --checkpoint PATH, --out DIR, --seed N,
--mode NAME. Exit codes: 0 success, 1 validation error, 2 numerical failure.

Derived random streams (all children of the experiment seed): 10 train data,
11 test data, 12 sampling, 13 inpainting, 14 reconstruction. The training
loop itself uses children 0 and 1 of the plan seed, and network init uses
children >= 1000, so no stream is consumed twice.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import CheckpointError, ConfigError, NumericalError
from .likelihood import IntegratorSettings, nll_report, write_nll_csv
from .metrics import score_field, unlearning_ratio
from .mixture import (SPLIT_NSFG, SPLIT_SFG, bayes_component, mixture_sample,
                      nsfg_posterior)
from .plots import loss_curve_svg, quiver_svg, scatter_svg
from .rng import Rng
from .sampling import SampleBatch, inpaint, pc_sample, reconstruct, reverse_sde_sample
from .scorenet import ScoreNet
from .training import SplitDataset, TrainPlan, train

STREAM_TRAIN_DATA = 10
STREAM_TEST_DATA = 11
STREAM_SAMPLING = 12
STREAM_INPAINT = 13
STREAM_RECONSTRUCT = 14


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the validation code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}") from None


def make_split_dataset(cfg: ExperimentConfig, n: int, rng: Rng) -> SplitDataset:
    x, comp = mixture_sample(cfg.mixture, n, rng, return_components=True)
    is_f = cfg.mixture.nsfg[comp]
    return SplitDataset(retain=x[~is_f], forget=x[is_f])


def build_net(cfg: ExperimentConfig) -> ScoreNet:
    return ScoreNet(seed=cfg.seed, input_dim=cfg.mixture.dim, widths=cfg.net.hidden,
                    time_freqs=cfg.net.time_freqs, sde=cfg.sde)


def load_net(cfg: ExperimentConfig, path) -> ScoreNet:
    net = ScoreNet.load(path, sde=cfg.sde)
    want = (cfg.mixture.dim, tuple(cfg.net.hidden), cfg.net.time_freqs)
    got = (net.input_dim, tuple(net.widths), net.time_freqs)
    if want != got:
        raise CheckpointError(
            f"checkpoint architecture {got} does not match config {want}")
    return net


def integrator_settings(cfg: ExperimentConfig) -> IntegratorSettings:
    lc = cfg.likelihood
    return IntegratorSettings(rtol=lc.rtol, atol=lc.atol, divergence=lc.divergence,
                              hutchinson_probes=lc.hutchinson_probes)


def _outdir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sample_model(net, cfg: ExperimentConfig, rng: Rng, n=None) -> SampleBatch:
    sc = cfg.sample
    n = sc.n if n is None else n
    if sc.method == "pc":
        return pc_sample(net, cfg.sde, n, sc.n_steps, sc.snr, sc.corrector_steps, rng)
    return reverse_sde_sample(net, cfg.sde, n, sc.n_steps, rng)


def _scatter_colors(cfg, points):
    flags = nsfg_posterior(cfg.mixture, points) > 0.5
    return ["#2ca02c" if f else "#b22222" for f in flags]


def write_results_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "ur", "nll_dg", "nll_df"])
        for row in rows:
            w.writerow([row["method"], repr(row["ur"]), repr(row["nll_dg"]),
                        repr(row["nll_df"])])


def read_results_csv(path):
    with open(path, newline="") as fh:
        return [
            {"method": r["method"], "ur": float(r["ur"]),
             "nll_dg": float(r["nll_dg"]), "nll_df": float(r["nll_df"])}
            for r in csv.DictReader(fh)
        ]


def write_ablation_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "value", "ur", "nll_dg", "nll_df", "final_loss_g", "error"])
        for r in rows:
            w.writerow([r["param"], repr(r["value"]),
                        "" if r.get("error") else repr(r["ur"]),
                        "" if r.get("error") else repr(r["nll_dg"]),
                        "" if r.get("error") else repr(r["nll_df"]),
                        "" if r.get("error") else repr(r["final_loss_g"]),
                        r.get("error", "")])


def read_ablation_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if r["error"]:
                rows.append({"param": r["param"], "value": float(r["value"]),
                             "error": r["error"]})
            else:
                rows.append({"param": r["param"], "value": float(r["value"]),
                             "ur": float(r["ur"]), "nll_dg": float(r["nll_dg"]),
                             "nll_df": float(r["nll_df"]),
                             "final_loss_g": float(r["final_loss_g"]), "error": ""})
    return rows


# -- subcommands -----------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    data = make_split_dataset(cfg, cfg.data.n_train, Rng(cfg.seed).child(STREAM_TRAIN_DATA))
    net = build_net(cfg)
    if args.checkpoint:
        net = load_net(cfg, args.checkpoint)
    net, curve = train(cfg.train, data, cfg.sde, net)
    ckpt = out / "checkpoint.msgm"
    net.save(ckpt)
    curve.to_csv(out / "loss.csv")
    final = curve.tail_mean_g(min(1000, max(len(curve), 1)))
    print(f"train mode={cfg.train.mode} steps={cfg.train.steps} "
          f"final_loss_g={final:.4f} checkpoint={ckpt}")
    return 0


def cmd_sample(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    net = load_net(cfg, args.checkpoint)
    batch = _sample_model(net, cfg, Rng(cfg.seed).child(STREAM_SAMPLING))
    batch.to_csv(out / "samples.csv")
    scatter_svg(batch.points, out / "scatter.svg", colors=_scatter_colors(cfg, batch.points),
                title=f"samples ({cfg.train.mode})", bounds=(-6, 6, -6, 6))
    ur = unlearning_ratio(cfg.mixture, batch)
    print(f"sample n={batch.n} method={cfg.sample.method} ur={ur:.4f} out={out}")
    return 0


def cmd_nll(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    net = load_net(cfg, args.checkpoint)
    test = make_split_dataset(cfg, cfg.data.n_test, Rng(cfg.seed).child(STREAM_TEST_DATA))
    res_g, res_f = nll_report(net, cfg.sde, test, integrator_settings(cfg),
                              max_points=cfg.likelihood.n_eval)
    write_nll_csv(out / "nll.csv", {"D_g": res_g, "D_f": res_f})
    print(f"nll D_g={res_g.mean:.4f}+-{res_g.stderr:.4f} "
          f"D_f={res_f.mean:.4f}+-{res_f.stderr:.4f} out={out}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    net = load_net(cfg, args.checkpoint)
    rng = Rng(cfg.seed)
    batch = _sample_model(net, cfg, rng.child(STREAM_SAMPLING))
    batch.to_csv(out / "samples.csv")
    scatter_svg(batch.points, out / "scatter.svg", colors=_scatter_colors(cfg, batch.points),
                title=f"samples ({cfg.train.mode})", bounds=(-6, 6, -6, 6))
    ur = unlearning_ratio(cfg.mixture, batch)
    test = make_split_dataset(cfg, cfg.data.n_test, rng.child(STREAM_TEST_DATA))
    res_g, res_f = nll_report(net, cfg.sde, test, integrator_settings(cfg),
                              max_points=cfg.likelihood.n_eval)
    write_nll_csv(out / "nll.csv", {"D_g": res_g, "D_f": res_f})
    fc = cfg.field_cfg
    model_field = score_field(net, fc.t, fc.rect, fc.resolution)
    model_field.to_csv(out / "field.csv")
    truth_field = score_field(cfg.mixture, fc.t, fc.rect, fc.resolution, sde=cfg.sde)
    quiver_svg(model_field, out / "field.svg", title=f"score field t={fc.t}",
               second=truth_field)
    loss_csv = Path(args.checkpoint).parent / "loss.csv"
    if loss_csv.exists():
        from .training import LossCurve
        loss_curve_svg(LossCurve.from_csv(loss_csv), out / "loss.svg",
                       title=f"retain loss ({cfg.train.mode})")
    write_results_csv(out / "results.csv", [{
        "method": cfg.train.mode, "ur": ur, "nll_dg": res_g.mean, "nll_df": res_f.mean,
    }])
    print(f"eval method={cfg.train.mode} ur={ur:.4f} "
          f"nll_dg={res_g.mean:.4f} nll_df={res_f.mean:.4f} out={out}")
    return 0


def cmd_field(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    fc = cfg.field_cfg
    if args.checkpoint:
        model = load_net(cfg, args.checkpoint)
        fld = score_field(model, fc.t, fc.rect, fc.resolution)
        title = f"model score field t={fc.t}"
    else:
        fld = score_field(cfg.mixture, fc.t, fc.rect, fc.resolution, sde=cfg.sde)
        title = f"analytic score field t={fc.t}"
    fld.to_csv(out / "field.csv")
    quiver_svg(fld, out / "field.svg", title=title)
    print(f"field t={fc.t} resolution={fc.resolution} out={out}")
    return 0


def cmd_inpaint(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    net = load_net(cfg, args.checkpoint)
    ic = cfg.inpaint
    batch = inpaint(net, cfg.sde, np.asarray(ic.observed), np.asarray(ic.mask),
                    ic.n, ic.n_steps, Rng(cfg.seed).child(STREAM_INPAINT))
    batch.to_csv(out / "inpaint.csv")
    scatter_svg(batch.points, out / "inpaint.svg",
                colors=_scatter_colors(cfg, batch.points),
                title="inpainted completions", bounds=(-6, 6, -6, 6))
    frac = unlearning_ratio(cfg.mixture, batch)
    print(f"inpaint n={batch.n} nsfg_fraction={frac:.4f} out={out}")
    return 0


def cmd_reconstruct(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    net = load_net(cfg, args.checkpoint)
    rc = cfg.reconstruct
    rng = Rng(cfg.seed).child(STREAM_RECONSTRUCT)
    test = make_split_dataset(cfg, cfg.data.n_test, Rng(cfg.seed).child(STREAM_TEST_DATA))
    rows = []
    stats = {}
    for split, pts in (("D_g", test.retain[: rc.n_points]),
                       ("D_f", test.forget[: rc.n_points])):
        recon = reconstruct(net, cfg.sde, pts, rc.t_star, rng, rc.n_steps)
        before, _ = bayes_component(cfg.mixture, pts)
        after, _ = bayes_component(cfg.mixture, recon)
        stats[split] = float((before == after).mean())
        for b, a, p, q in zip(before, after, pts, recon):
            rows.append([split, int(b), int(a), *p, *q])
    d = cfg.mixture.dim
    with open(out / "reconstruct.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "component_before", "component_after",
                    *[f"x{i + 1}" for i in range(d)],
                    *[f"recon_x{i + 1}" for i in range(d)]])
        for row in rows:
            w.writerow([row[0], row[1], row[2], *[repr(float(v)) for v in row[3:]]])
    print(f"reconstruct t_star={rc.t_star} keep_Dg={stats['D_g']:.4f} "
          f"keep_Df={stats['D_f']:.4f} out={out}")
    return 0


def _parse_sweep(raw: str):
    name, _, vals = raw.partition("=")
    name = name.strip().lower()
    if name not in ("alpha", "interval"):
        raise ConfigError([f"--sweep: parameter must be 'alpha' or 'interval', got {name!r}"])
    try:
        values = [float(v) if name == "alpha" else int(v)
                  for v in vals.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError([f"--sweep: {exc}"]) from None
    if not values:
        raise ConfigError(["--sweep: empty value list"])
    return name, values


def cmd_ablate(cfg: ExperimentConfig, args) -> int:
    out = _outdir(cfg, args)
    name, values = _parse_sweep(args.sweep)
    data = make_split_dataset(cfg, cfg.data.n_train, Rng(cfg.seed).child(STREAM_TRAIN_DATA))
    test = make_split_dataset(cfg, cfg.data.n_test, Rng(cfg.seed).child(STREAM_TEST_DATA))
    rows = []
    failures = 0
    for v in values:
        if name == "alpha":
            plan = replace(cfg.train, alpha=float(v))
        else:
            plan = replace(cfg.train, update_interval=int(v))
        net = build_net(cfg)
        try:
            net, curve = train(plan, data, cfg.sde, net)
            batch = _sample_model(net, cfg, Rng(cfg.seed).child(STREAM_SAMPLING))
            ur = unlearning_ratio(cfg.mixture, batch)
            res_g, res_f = nll_report(net, cfg.sde, test, integrator_settings(cfg),
                                      max_points=cfg.likelihood.n_eval)
            row = {"param": name, "value": v, "ur": ur, "nll_dg": res_g.mean,
                   "nll_df": res_f.mean,
                   "final_loss_g": curve.tail_mean_g(min(1000, len(curve))),
                   "error": ""}
        except NumericalError as exc:
            failures += 1
            row = {"param": name, "value": v, "error": str(exc)}
            print(f"ablate {name}={v}: failed: {exc}", file=sys.stderr)
        rows.append(row)
        if not row.get("error"):
            print(f"ablate {name}={v} ur={row['ur']:.4f} nll_dg={row['nll_dg']:.4f} "
                  f"nll_df={row['nll_df']:.4f} final_loss_g={row['final_loss_g']:.4f}")
    write_ablation_csv(out / "ablation.csv", rows)
    return 2 if failures else 0


COMMANDS = {
    "train": (cmd_train, "train a model and write checkpoint + loss curve"),
    "sample": (cmd_sample, "draw samples from a checkpoint"),
    "nll": (cmd_nll, "negative log-likelihood report on held-out splits"),
    "eval": (cmd_eval, "full evaluation: UR, NLL table row, figures"),
    "field": (cmd_field, "score-field grid (model or analytic)"),
    "inpaint": (cmd_inpaint, "conditional completion with fixed coordinates"),
    "reconstruct": (cmd_reconstruct, "perturb-and-reverse reconstruction"),
    "ablate": (cmd_ablate, "sweep alpha or update interval"),
}

_NEEDS_CKPT = ("sample", "nll", "eval", "inpaint", "reconstruct")


def build_parser() -> _Parser:
    parser = _Parser(prog="msgm", description="score-SDE generative modeling "
                     "and unlearning experiments on low-dimensional data")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--checkpoint", default=None, help="model checkpoint path")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="override experiment seed")
        p.add_argument("--mode", default=None, help="override training mode")
        if name == "ablate":
            p.add_argument("--sweep", required=True,
                           help="e.g. alpha=0.7,0.9,0.99,1.0 or interval=1,4")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return 0 if not exc.code else 1
    try:
        cfg = load_config(args.config, overrides={
            "seed": args.seed, "mode": args.mode, "out_dir": args.out,
        })
        if args.command in _NEEDS_CKPT and not args.checkpoint:
            raise ConfigError([f"{args.command}: --checkpoint is required"])
        return COMMANDS[args.command][0](cfg, args)
    except (ConfigError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
