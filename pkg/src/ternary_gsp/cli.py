"""``ternary`` command-line tool.

Subcommands: ``build-scheme``, ``forward``, ``verify``, ``info``.

Exit codes: 0 success; 1 parse error or failed verification; 2 validation
or shape error (including bad usage); 3 unsupported input such as a
directed graph.  ``TERNARY_SEED``, when set, overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import formats
from .errors import ParseError, TernaryError, UnsupportedGraphError, ValidationError
from .graph_core import Graph, parse_edge_list
from .schemes import (
    KINDS,
    GatParams,
    build_chebnet_scheme,
    build_conv1d_scheme,
    build_fc_scheme,
    build_gat_scheme,
    build_gcn_scheme,
    build_tagcn_scheme,
)
from .tensor_core import ParamTensor, TernaryLayer, ternary_forward
from .verify import (
    GRADIENT_KINDS,
    MODELS,
    TrialConfig,
    check_equivalence,
    check_gradients,
    scheme_stats,
    suite_configs,
    suite_to_json,
)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_FAIL = 1
EXIT_VALIDATION = 2
EXIT_UNSUPPORTED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def count(text: str) -> int:
    """Non-negative integer; scientific notation such as ``1e3`` is accepted."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value != int(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def _read_graph(path, directed=False) -> Graph:
    return parse_edge_list(Path(path).read_text(encoding="utf-8"), directed=directed)


def _print_stats(stats: dict, out=None) -> None:
    out = out or sys.stdout
    for key, value in stats.items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, list):
            value = ",".join(str(v) for v in value)
        print(f"{key}={value}", file=out)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"usage: --model {args.model} requires {', '.join(missing)}")


def cmd_build_scheme(args) -> int:
    model = args.model
    if model == "fc":
        _require(args, "i", "j")
        built = [build_fc_scheme(args.i, args.j)]
    elif model == "conv1d":
        _require(args, "i", "kernel")
        built = [build_conv1d_scheme(args.i, args.kernel, args.stride, args.padding)]
    else:
        _require(args, "graph")
        g = _read_graph(args.graph, args.directed)
        if model == "gcn":
            built = [build_gcn_scheme(g)]
        elif model == "chebnet":
            built = [build_chebnet_scheme(g, args.c, args.rescale, args.variant)]
        elif model == "tagcn":
            built = [build_tagcn_scheme(g, args.c)]
        else:
            _require(args, "theta", "attention", "x")
            params = GatParams(
                formats.read_tensor(args.theta).array,
                formats.read_tensor(args.attention).array,
                mode=args.mode,
                leaky_slope=args.slope,
                include_self=not args.no_self,
            )
            built = build_gat_scheme(g, params, formats.read_tensor(args.x).array)

    out = Path(args.out)
    if len(built) == 1:
        targets = [out]
    else:
        targets = [out.with_name(f"{out.stem}.head{h}{out.suffix}") for h in range(len(built))]
    for (s, spec), target in zip(built, targets):
        formats.write_scheme(target, s, spec.to_dict())
        if len(built) > 1:
            print(f"file={target}")
        stats = scheme_stats(s)
        _print_stats({"K": stats["K"], "nnz": stats["nnz"], "density": stats["density"]})
    return EXIT_OK


def cmd_forward(args) -> int:
    s, _ = formats.read_scheme(args.scheme)
    theta = ParamTensor(formats.read_tensor(args.theta))
    x = formats.read_tensor(args.x)
    y = ternary_forward(TernaryLayer(theta, s), x)
    formats.write_tensor(args.out, y, args.format)
    return EXIT_OK


def _seed(args) -> int:
    env = os.environ.get("TERNARY_SEED")
    if env is not None and env.strip():
        try:
            return count(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"TERNARY_SEED: {exc}") from None
    return args.seed


def cmd_verify(args) -> int:
    base = TrialConfig(
        model="gcn",
        trials=args.trials,
        n_range=(1, args.n),
        p_range=(1, args.p),
        q_range=(1, args.q),
        b_range=(1, args.b),
        c_order=args.c,
        heads=args.heads,
        seed=_seed(args),
        tol=args.tol,
        rescale_mode=args.rescale,
        gat_mode=args.mode,
        include_self=not args.no_self,
        leaky_slope=args.slope,
        edge_prob=args.edge_prob,
    )
    reports = [check_equivalence(cfg) for cfg in suite_configs(base, args.model)]
    grads = []
    if args.gradients:
        kinds = GRADIENT_KINDS if args.model == "all" else (args.model,)
        grads = [check_gradients(suite_configs(base, k)[0]) for k in kinds]
    text = suite_to_json(reports, grads)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    ok = True
    for r in reports + grads:
        worst = max((t.max_abs_err for t in r.trials if t.max_abs_err is not None), default=0.0)
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.model}: {status} trials={len(r.trials)} failed={len(r.failures)} max_abs_err={worst:.3e}")
        for t in r.failures:
            if t.error:
                print(f"  trial {t.index}: {t.error}", file=sys.stderr)
        ok = ok and r.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_info(args) -> int:
    s, spec = formats.read_scheme(args.scheme)
    stats = scheme_stats(s)
    if spec is not None:
        stats = {"kind": spec.get("kind"), **stats}
    _print_stats(stats)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ternary", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    layer_opts = _Parser(add_help=False)
    layer_opts.add_argument("--mode", choices=["concat", "average"], default="concat")
    layer_opts.add_argument("--slope", type=float, default=0.2, help="LeakyReLU negative slope")
    layer_opts.add_argument("--no-self", action="store_true", help="exclude j from its own attention neighborhood")
    layer_opts.add_argument("--rescale", choices=["standard", "paper"], default="standard")
    layer_opts.add_argument("--c", type=count, default=3, help="Chebyshev order / TAGCN power count")

    b = sub.add_parser("build-scheme", parents=[layer_opts], help="build an allocation tensor")
    b.add_argument("--model", choices=KINDS, required=True)
    b.add_argument("--graph")
    b.add_argument("--directed", action="store_true", help="read the edge list as directed")
    b.add_argument("--i", type=count)
    b.add_argument("--j", type=count)
    b.add_argument("--kernel", type=count)
    b.add_argument("--stride", type=count, default=1)
    b.add_argument("--padding", type=count, default=0)
    b.add_argument("--variant", choices=["faithful", "collapsed"], default="faithful")
    b.add_argument("--theta", help="GAT feature maps, A x P x Q or P x Q")
    b.add_argument("--attention", help="GAT attention vectors, A x 2Q or 2Q")
    b.add_argument("--x", help="GAT input signal, P x N or 1 x P x N")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_scheme)

    f = sub.add_parser("forward", help="evaluate y = theta S x")
    f.add_argument("--scheme", required=True)
    f.add_argument("--theta", required=True)
    f.add_argument("--x", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--format", choices=["json", "binary"], default="json")
    f.set_defaults(func=cmd_forward)

    v = sub.add_parser("verify", parents=[layer_opts], help="oracle-equivalence checks")
    v.add_argument("--model", choices=("all",) + MODELS, default="all")
    v.add_argument("--trials", type=count, default=20)
    v.add_argument("--heads", type=count, default=2, help="GAT attention heads")
    v.add_argument("--n", type=count, default=16, help="max vertices / neurons")
    v.add_argument("--p", type=count, default=4, help="max input channels")
    v.add_argument("--q", type=count, default=4, help="max output features")
    v.add_argument("--b", type=count, default=2, help="max batch size")
    v.add_argument("--seed", type=count, default=42)
    v.add_argument("--tol", type=float, default=1e-10)
    v.add_argument("--edge-prob", type=float, default=0.3)
    v.add_argument("--gradients", action="store_true")
    v.add_argument("--out", help="write the JSON report here")
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("info", help="print scheme statistics")
    i.add_argument("--scheme", required=True)
    i.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnsupportedGraphError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ValidationError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TernaryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
