"""Command-line front end.

Exit status: 0 on success, 1 on a domain or validation error, 2 on a usage error.
Results files are canonical JSON, so identical invocations produce identical
bytes regardless of --threads.
"""

import argparse
import hashlib
import json
import sys
import warnings

import numpy as np

from . import __version__, _kernels
from .calibration import CalibrationConfig, calibrate
from .dataio import check_budget, export_csv, read_dataset, read_results, write_dataset, write_results
from .errors import DomainError
from .evaluation import SplitPlan, run_splits
from .llmgen import BUILTIN_TEMPLATES, GenConfig, PromptTemplate, generate_responses
from .simulator import (PRESETS, discrepancies, make_preset, make_source, oracle_k_star,
                        simulate_dataset, variance_ratio_check)
from .stats import RngStream

ALPHA_GRID = (0.05, 0.1, 0.15, 0.2)
# flags that never change results and so stay out of the config echo
_VOLATILE = {"out", "threads", "csv", "func", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--out", required=True, help="results file to write")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--threads", type=int, default=None, help="worker thread cap")


def _alpha_flags(p):
    p.add_argument("--alpha", type=float, default=0.05, help="target miscoverage (default: 0.05)")
    p.add_argument("--alpha-grid", type=float, nargs="*", default=None,
                   help="run several alphas; with no values uses 0.05 0.1 0.15 0.2")


def _calibration_flags(p):
    p.add_argument("--data", required=True, help="dataset JSON file")
    _alpha_flags(p)
    p.add_argument("--gamma", type=float, default=0.5, help="level of the real-data set")
    p.add_argument("--dilation", type=float, default=2.0, help="dilation factor C (default: 2)")
    p.add_argument("--budget", type=int, default=None,
                   help="K; defaults to the shortest synthetic stream in the data")
    p.add_argument("--method", choices=("simple", "general"), default="simple")
    p.add_argument("--constructor", choices=("clt", "bernstein", "kl", "box"), default="clt")
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                   help="override the dataset response range (and hence M)")
    p.add_argument("--min-k", type=int, default=1,
                   help="use the universe set for prefixes shorter than this (default: 1)")
    p.add_argument("--csv", default=None, help="also export curve and aggregate rows as CSV")


def _sim_flags(p, defaults):
    p.add_argument("--preset", choices=sorted(PRESETS), default=defaults.get("preset", "beta-logistic"))
    p.add_argument("--kappa", type=int, default=20, help="hidden pool size")
    p.add_argument("--m", type=int, default=defaults.get("m", 300), help="number of questions")
    p.add_argument("--n", type=int, default=400, help="real responses per question")
    p.add_argument("--k-max", type=int, default=200, help="largest synthetic sample size")
    p.add_argument("--mc-reps", type=int, default=defaults.get("mc_reps", 1),
                   help="Monte Carlo replicates per question")
    p.add_argument("--resamples", type=int, default=None, help="answers per agent (B)")


def build_parser():
    parser = _Parser(prog="synthcal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"synthcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="select k-hat on a dataset")
    _calibration_flags(p)
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="repeated train/test evaluation")
    _calibration_flags(p)
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--train-frac", type=float, default=0.6)
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    _sim_flags(p, {})
    p.add_argument("--budget", type=int, default=None, help="synthetic responses per question"
                   " (default: --k-max)")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="Monte Carlo oracle sample size")
    _sim_flags(p, {"m": 2000, "mc_reps": 5})
    _alpha_flags(p)
    p.add_argument("--dilation", type=float, default=2.0)
    p.add_argument("--constructor", choices=("clt", "kl", "bernstein"), default="clt")
    p.add_argument("--min-k", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("discrepancy", help="discrepancy quantiles of an MTurk instance")
    _sim_flags(p, {"m": 2000})
    _alpha_flags(p)
    _common(p)
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser("generate", help="append LLM responses to a dataset")
    p.add_argument("--data", required=True, help="dataset JSON file, updated in place")
    p.add_argument("--endpoint", required=True, help="chat-completions URL or mock://...")
    p.add_argument("--model", required=True)
    p.add_argument("--template", default="opinion",
                   help="built-in template name (opinion, eedi) or a JSON template file")
    p.add_argument("--profiles", required=True, help="JSON list of profile objects")
    p.add_argument("--k", type=int, required=True, help="responses to add per question")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--api-key-env", default="OPENAI_API_KEY")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("report", help="render a results file as a table")
    p.add_argument("--data", required=True, help="results file")
    p.add_argument("--out", default=None, help="write the table here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


# ----------------------------------------------------------------- helpers


def _echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _document(args, rows, summary, **extra):
    doc = {"toolkit": "synthcal", "toolkit_version": __version__, "command": args.command,
           "config": _echo(args), "rows": rows, "summary": summary}
    doc.update(extra)
    return doc


def _alphas(args):
    if args.alpha_grid is None:
        return [args.alpha]
    return list(args.alpha_grid) if args.alpha_grid else list(ALPHA_GRID)


def _load(args):
    dataset = read_dataset(args.data)
    records = dataset.records()
    rng = tuple(args.range) if args.range else dataset.response_range
    budget = args.budget if args.budget is not None else min(r.n_synthetic for r in records)
    check_budget(records, budget)
    return records, rng, budget


def _config(args, alpha, rng, budget):
    return CalibrationConfig(alpha=alpha, budget=budget, gamma=args.gamma, dilation=args.dilation,
                             constructor=args.constructor, response_range=rng, method=args.method,
                             min_k=args.min_k)


def _finish(args, doc):
    write_results(doc, args.out)
    if getattr(args, "csv", None):
        export_csv(doc, args.csv)


# ---------------------------------------------------------------- commands


def cmd_calibrate(args):
    records, rng, budget = _load(args)
    rows, summary = [], []
    metric = "G" if args.method == "simple" else "L"
    for alpha in _alphas(args):
        cfg = _config(args, alpha, rng, budget)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = calibrate(records, cfg)
        rows += [{"kind": "curve", "metric": metric, "alpha": alpha, "k": k, "value": v}
                 for k, v in res.curve_pairs]
        summary.append({"alpha": alpha, "k_hat": res.k_hat, "kappa_hat": res.kappa_hat,
                        "threshold": res.threshold, "n_questions": len(records)})
        print(f"alpha={alpha:g}  k_hat={res.k_hat}  kappa_hat={res.kappa_hat:g}"
              + ("  (synthetic source unusable at this alpha)" if res.k_hat == 0 else ""))
    _finish(args, _document(args, rows, summary, data_sha256=_file_digest(args.data)))


def cmd_evaluate(args):
    records, rng, budget = _load(args)
    plan = SplitPlan(seed=args.seed, n_splits=args.splits, train_fraction=args.train_frac)
    rows, summary = [], []
    for alpha in _alphas(args):
        report = run_splits(records, _config(args, alpha, rng, budget), plan)
        for s in report.per_split:
            rows.append({"kind": "split", "alpha": alpha, **vars(s)})
        for name, agg in report.aggregate.items():
            rows.append({"kind": "aggregate", "alpha": alpha, "field": name, **agg})
        summary.append({"alpha": alpha, **{f"{k}_mean": v["mean"] for k, v in report.aggregate.items()}})
        agg = report.aggregate
        print(f"alpha={alpha:g}  k_hat={agg['k_hat']['mean']:.2f}"
              f"  test_miscoverage={agg['test_miscoverage']['mean']:.4f}"
              f"  k_star_te={agg['k_star_te']['mean']:.2f}")
    _finish(args, _document(args, rows, summary, data_sha256=_file_digest(args.data)))


def _source(args, stream):
    population = make_preset(args.preset)
    source = make_source(args.preset, population, args.kappa, stream.substream(0).generator())
    return population, source


def cmd_simulate(args):
    stream = RngStream(args.seed)
    population, source = _source(args, stream)
    K = args.budget if args.budget is not None else args.k_max
    data = simulate_dataset(population, source, args.m, args.n, K, stream.substream(1).generator(),
                            resamples=args.resamples)
    questions = [{"id": r.question_id, "real_responses": r.real_responses.astype(int).tolist(),
                  "synthetic_responses": r.synthetic_responses.astype(int).tolist()}
                 for r in data.records]
    from .dataio import Dataset
    meta = {"simulation": {"population": population.params(), "source": source.params(),
                           "config": _echo(args),
                           "true_means": data.mu, "synthetic_means": data.mu_syn}}
    write_dataset(Dataset("1", (0.0, 1.0), questions, extra=meta), args.out)
    print(f"wrote {args.m} questions to {args.out}")


def cmd_oracle(args):
    stream = RngStream(args.seed)
    population, source = _source(args, stream)
    rows, summary = [], []
    for i, alpha in enumerate(_alphas(args)):
        res = oracle_k_star(population, source, args.dilation, args.constructor, alpha, args.m,
                            args.mc_reps, args.k_max, stream.substream(10 + i).generator(),
                            min_k=args.min_k)
        rows += [{"kind": "curve", "metric": "coverage", "alpha": alpha, "k": k, "value": v}
                 for k, v in enumerate(res.coverage)]
        summary.append({"alpha": alpha, "k_star": res.k_star, "censored": res.censored,
                        "k_star_over_c": res.k_star / args.dilation, "stderr": res.stderr,
                        "n_paths": res.n_paths})
        print(f"alpha={alpha:g}  k_star={res.k_star}{' (censored)' if res.censored else ''}"
              f"  k_star/C={res.k_star / args.dilation:g}")
    if args.resamples is not None:
        q = population.sample_questions(stream.substream(2).generator(), 1)
        vr = variance_ratio_check(population, q, args.kappa, args.resamples, max(args.mc_reps, 2),
                                  stream.substream(3).generator())
        rows.append({"kind": "variance_ratio", **vars(vr)})
        print(f"variance ratio: empirical {vr.empirical_ratio:.4f}  predicted {vr.predicted_ratio:.4f}")
    _finish(args, _document(args, rows, summary))


def cmd_discrepancy(args):
    stream = RngStream(args.seed)
    population, source = _source(args, stream)
    questions = population.sample_questions(stream.substream(1).generator(), args.m)
    levels = [1.0 - a for a in _alphas(args)]
    rep = discrepancies(population, source, questions, levels)
    rows = [{"kind": "quantile", "level": lvl, **vals} for lvl, vals in sorted(rep.quantiles.items())]
    summary = {"n_questions": int(questions.size), "n_degenerate": rep.n_degenerate}
    for row in rows:
        print(f"level={row['level']:g}  Q(delta)={row['delta']:.6g}  Q(delta_kl)={row['delta_kl']:.6g}")
    _finish(args, _document(args, rows, summary))


def cmd_generate(args):
    if args.template in BUILTIN_TEMPLATES:
        template = BUILTIN_TEMPLATES[args.template]
    else:
        template = PromptTemplate.from_file(args.template)
    try:
        with open(args.profiles, encoding="utf-8") as fh:
            profiles = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"{args.profiles}: cannot read profiles ({exc})") from None
    cfg = GenConfig(endpoint_url=args.endpoint, model_name=args.model, temperature=args.temperature,
                    max_retries=args.max_retries, api_key_env=args.api_key_env,
                    max_in_flight=args.threads or 4)
    report = generate_responses(args.data, template, cfg, profiles, args.k,
                                RngStream(args.seed).generator())
    rows = [{"kind": "provenance", **p} for p in report.provenance]
    endpoint = cfg.to_dict()
    endpoint.pop("max_in_flight")  # follows --threads, which must not change the results file
    summary = {"appended": report.appended, "short": report.short, "endpoint": endpoint}
    print(f"appended responses to {len(report.appended)} questions; {len(report.short)} short")
    _finish(args, _document(args, rows, summary))


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def render_table(doc):
    """Plain-text rendering of a results document, grouped by row kind."""
    lines = [f"{doc.get('toolkit', '?')} {doc.get('toolkit_version', '?')}  command: {doc.get('command')}"]
    summary = doc.get("summary")
    if summary:
        lines.append("")
        lines.append("summary")
        items = summary if isinstance(summary, list) else [summary]
        for item in items:
            lines.append("  " + "  ".join(f"{k}={_fmt(v)}" for k, v in sorted(item.items())))
    groups = {}
    for row in doc.get("rows", []):
        groups.setdefault(row.get("kind", "row"), []).append(row)
    for kind, rows in groups.items():
        cols = sorted({c for r in rows for c in r if c != "kind"})
        table = [cols] + [[_fmt(r.get(c)) for c in cols] for r in rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
        lines += ["", f"{kind} ({len(rows)} rows)"]
        for row in table:
            lines.append("  " + "  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def cmd_report(args):
    text = render_table(read_results(args.data))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None):
    """Parse ``argv`` and execute; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    _kernels.set_threads(getattr(args, "threads", None))
    try:
        args.func(args)
    except DomainError as exc:
        print(f"synthcal {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"synthcal {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
