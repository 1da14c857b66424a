"""Command-line front end.

Subcommands::

    attnmask simulate <scenario.scen> --masked|--unmasked --out DIR [overrides]
    attnmask select-regions <maps.amap> [--lambda V] [--threshold-ratio V]
                            [--top-k K] [--exact]
    attnmask render <maps.amap> --token I --out heatmap.pgm
    attnmask preset <archetype> --out scenario.scen [--seed N] [--steps N]

Exit codes: 0 success, 1 malformed input, 2 I/O failure (simulate),
3 exhaustive-solver bound exceeded (select-regions --exact).
All outputs are deterministic functions of the inputs and flags; files are
written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    Archetype,
    ClassifierConfig,
    PipelineConfig,
    RunReport,
    archetype_preset,
    drifting_preset,
    run_pipeline,
)
from .formats import (
    AmapFile,
    FormatError,
    parse_amap,
    render_amap,
    render_pgm,
    render_region,
    render_scen,
    parse_scen,
    write_atomic,
)
from .maskgen import MaskGenConfig
from .regions import (
    EnumerationLimitError,
    RegionSelectionConfig,
    objective_exact,
    objective_surrogate,
    solve_regions_approx,
    solve_regions_exact,
)
from .smoothing import GaussianKernelSpec
from .temporal import MomentumConfig, top_fraction_score


def _fmt(value: float) -> str:
    return repr(float(value))


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline overrides")
    group.add_argument("--lambda", dest="overlap_penalty", type=float, default=0.5,
                       help="overlap penalty weight (default 0.5)")
    group.add_argument("--threshold-ratio", type=float, default=0.5,
                       help="eligibility floor as a fraction of each token's max (default 0.5)")
    group.add_argument("--top-k", type=int, default=None,
                       help="cap eligible sets at the k largest values (default: no cap)")
    group.add_argument("--w0", dest="boost", type=float, default=5.0,
                       help="additive mask boost (default 5)")
    group.add_argument("--alpha", type=float, default=0.03,
                       help="momentum weight on the carried map (default 0.03)")
    group.add_argument("--beta", type=float, default=0.99,
                       help="momentum weight on the incoming map (default 0.99)")
    group.add_argument("--smooth-radius", type=int, default=1,
                       help="Gaussian kernel radius in pixels (default 1)")
    group.add_argument("--smooth-sigma", type=float, default=0.5,
                       help="Gaussian kernel sigma in pixels (default 0.5)")
    group.add_argument("--masked-res", type=str, default="16",
                       help="comma-separated side lengths masking applies to (default 16)")
    group.add_argument("--score-fraction", type=float, default=0.25,
                       help="fraction of top values averaged into scores (default 0.25)")
    group.add_argument("--overlap-min", type=float, default=0.5,
                       help="overlap verdict threshold (default 0.5)")
    group.add_argument("--balanced-gap-max", type=float, default=2.0,
                       help="max score gap still considered balanced (default 2)")
    group.add_argument("--gap-min", type=float, default=5.0,
                       help="score gap triggering a preempted verdict (default 5)")
    group.add_argument("--misplacement-min", type=float, default=0.5,
                       help="misplaced-mass fraction triggering a wrong-region verdict (default 0.5)")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    try:
        resolutions = frozenset(int(r) for r in args.masked_res.split(","))
    except ValueError as exc:
        raise FormatError(f"bad --masked-res value {args.masked_res!r}") from exc
    return PipelineConfig(
        smoothing=GaussianKernelSpec(radius=args.smooth_radius, sigma=args.smooth_sigma),
        regions=RegionSelectionConfig(
            overlap_penalty=args.overlap_penalty,
            threshold_ratio=args.threshold_ratio,
            top_k=args.top_k,
        ),
        maskgen=MaskGenConfig(boost=args.boost, masked_resolutions=resolutions),
        momentum=MomentumConfig(alpha=args.alpha, beta=args.beta),
        classifier=ClassifierConfig(
            overlap_min=args.overlap_min,
            balanced_gap_max=args.balanced_gap_max,
            gap_min=args.gap_min,
            misplacement_min=args.misplacement_min,
            score_fraction=args.score_fraction,
        ),
    )


def _metrics_lines(report: RunReport) -> str:
    lines = ["# step token score region_size mask_nonzeros"]
    for record in report.steps:
        for pos, token in enumerate(report.selection.indices):
            column_nonzeros = int((record.mask.values[:, token] != 0).sum())
            lines.append(
                f"{record.step} {token} {_fmt(record.scores[pos])} "
                f"{len(record.regions[pos])} {column_nonzeros}"
            )
    return "\n".join(lines) + "\n"


def _verdict_lines(report: RunReport) -> str:
    lines = ["# subject verdict metrics"]
    for verdict in report.verdicts:
        subject = ",".join(str(i) for i in verdict.subject)
        labels = ",".join(verdict.labels)
        metrics = " ".join(
            f"{key}={_fmt(value)}" for key, value in sorted(verdict.metrics.items())
        )
        kind = "pair" if len(verdict.subject) == 2 else "token"
        lines.append(f"{kind} {subject} {labels} {verdict.verdict.value} {metrics}")
    return "\n".join(lines) + "\n"


def _run_simulate(args: argparse.Namespace) -> int:
    try:
        spec = parse_scen(Path(args.scenario).read_text(encoding="utf-8"))
        config = _config_from_args(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_pipeline(spec, masking_enabled=args.masked, config=config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for record in report.steps:
            suffix = f"step_{record.step:03d}.amap"
            write_atomic(
                out / f"probs_{suffix}",
                render_amap(AmapFile.from_state(record.probabilities)),
            )
            write_atomic(
                out / f"mask_{suffix}",
                render_amap(AmapFile.from_mask(record.mask)),
            )
        for token in report.selection.indices:
            write_atomic(
                out / f"avg_token_{token}.pgm",
                render_pgm(report.averaged_token_map(token)),
            )
        write_atomic(out / "metrics.txt", _metrics_lines(report))
        write_atomic(out / "verdicts.txt", _verdict_lines(report))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"simulated {spec.num_steps} steps "
        f"({'masked' if args.masked else 'unmasked'}) in "
        f"{report.elapsed_seconds:.3f}s -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _run_select_regions(args: argparse.Namespace) -> int:
    try:
        amap = parse_amap(Path(args.amap).read_text(encoding="utf-8"))
        if amap.kind != "PROBS":
            raise FormatError(f"expected a PROBS-kind AMAP, got {amap.kind}")
        config = RegionSelectionConfig(
            overlap_penalty=args.overlap_penalty,
            threshold_ratio=args.threshold_ratio,
            top_k=args.top_k,
        )
    except (FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    maps = [
        amap.values[:, token].reshape(amap.shape.height, amap.shape.width)
        for token in range(amap.num_tokens)
    ]
    if args.exact:
        try:
            assignment = solve_regions_exact(maps, config)
        except EnumerationLimitError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
    else:
        assignment = solve_regions_approx(maps, config)
    sys.stdout.write(
        render_region(list(zip(assignment.token_indices, assignment.regions)))
    )
    surrogate = objective_surrogate(assignment, maps, config.overlap_penalty)
    print(f"# objective surrogate {_fmt(surrogate)}")
    if args.exact:
        exact = objective_exact(assignment, maps, config.overlap_penalty)
        print(f"# objective exact {_fmt(exact)}")
    return 0


def _run_render(args: argparse.Namespace) -> int:
    try:
        amap = parse_amap(Path(args.amap).read_text(encoding="utf-8"))
        if not (0 <= args.token < amap.num_tokens):
            raise FormatError(
                f"token index {args.token} out of range [0, {amap.num_tokens})"
            )
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    spatial = amap.values[:, args.token].reshape(amap.shape.height, amap.shape.width)
    try:
        write_atomic(args.out, render_pgm(spatial))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(_fmt(top_fraction_score(spatial)))
    return 0


def _run_preset(args: argparse.Namespace) -> int:
    if args.archetype == "drifting":
        spec = drifting_preset(seed=args.seed, num_steps=args.steps or 40)
    else:
        spec = archetype_preset(
            Archetype(args.archetype), seed=args.seed, num_steps=args.steps or 24
        )
    try:
        write_atomic(args.out, render_scen(spec))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnmask",
        description="Adaptive cross-attention masking engine and scenario harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run a scenario through the pipeline")
    simulate.add_argument("scenario", help="path to a SCEN scenario file")
    mode = simulate.add_mutually_exclusive_group(required=True)
    mode.add_argument("--masked", action="store_true", help="apply adaptive masks")
    mode.add_argument("--unmasked", dest="masked", action="store_false",
                      help="diagnostics only, no masking")
    simulate.add_argument("--out", required=True, help="output directory")
    _add_config_flags(simulate)
    simulate.set_defaults(handler=_run_simulate)

    select = sub.add_parser("select-regions", help="solve region selection for an AMAP")
    select.add_argument("amap", help="path to a PROBS-kind AMAP file")
    select.add_argument("--lambda", dest="overlap_penalty", type=float, default=0.5)
    select.add_argument("--threshold-ratio", type=float, default=0.5)
    select.add_argument("--top-k", type=int, default=None)
    select.add_argument("--exact", action="store_true",
                        help="use the exhaustive solver (small instances only)")
    select.set_defaults(handler=_run_select_regions)

    render = sub.add_parser("render", help="render one token's map as a PGM heatmap")
    render.add_argument("amap", help="path to an AMAP file")
    render.add_argument("--token", type=int, required=True)
    render.add_argument("--out", required=True, help="output PGM path")
    render.set_defaults(handler=_run_render)

    preset = sub.add_parser("preset", help="write a built-in scenario to a SCEN file")
    preset.add_argument(
        "archetype",
        choices=[a.value for a in Archetype] + ["drifting"],
    )
    preset.add_argument("--seed", type=int, default=0)
    preset.add_argument("--steps", type=int, default=None)
    preset.add_argument("--out", required=True, help="output SCEN path")
    preset.set_defaults(handler=_run_preset)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
