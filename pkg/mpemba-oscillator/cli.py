"""Command-line entry point for the damped-oscillator relaxation toolkit."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from commands.moments_report import DEFAULT_L_MAX, moments_report
from commands.simulate import run_scenario, simulate_command, write_results
from commands.spectrum import DEFAULT_SPECTRUM_N, spectrum_command
from utils.io import report_to_json, write_output
from utils.model import make_bath
from utils.scenarios import BUILTIN_SCENARIOS, Scenario, builtin_scenario, load_scenario

logger = logging.getLogger(__name__)

EXIT_BAD_INPUT = 2
EXIT_FAILURE = 1
DEFAULT_OUT_DIR = "out"


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=DEFAULT_OUT_DIR, help="出力ディレクトリ (既定: out)")
    parser.add_argument("--n-max", type=int, default=None, help="切り詰め準位数 N を固定する")
    parser.add_argument(
        "--measure",
        action="append",
        choices=["kl", "trace", "hs"],
        default=None,
        help="距離尺度 (複数指定可、最初のものが交差判定に使われる)",
    )
    parser.add_argument("--units", choices=["gamma-t", "physical"], default=None, help="時間の単位")
    parser.add_argument("--method", choices=["spectral", "ode"], default=None, help="伝播方法")
    parser.add_argument("--workers", type=int, default=None, help="並列に伝播する状態数の上限")


def _add_source_options(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--config", type=Path, help="シナリオ JSON ファイル")
    group.add_argument("--builtin", choices=BUILTIN_SCENARIOS, help="組み込みシナリオ名")


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="減衰調和振動子の熱緩和と Mpemba 効果のシミュレーション"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="ログレベル (既定: WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="シナリオを実行して CSV/JSON を書き出す")
    _add_source_options(simulate)
    _add_run_options(simulate)

    reproduce = sub.add_parser("reproduce", help="組み込みシナリオ (fig2/fig3/fig4/ladder) を実行する")
    reproduce.add_argument("figure", choices=BUILTIN_SCENARIOS)
    _add_run_options(reproduce)

    mpemba = sub.add_parser("mpemba", help="交差判定の結果を JSON で標準出力に表示する")
    _add_source_options(mpemba)
    _add_run_options(mpemba)
    mpemba.add_argument("--no-write", action="store_true", help="ファイルを書き出さない")

    spectrum = sub.add_parser("spectrum", help="解析的固有値と数値固有値を比較する")
    spectrum.add_argument("--gamma", type=float, default=1.0)
    spectrum.add_argument("--omega0", type=float, default=1.0)
    spectrum.add_argument("--n-th", type=float, required=True)
    spectrum.add_argument("--alpha-max", type=int, default=10)
    spectrum.add_argument("--s-max", type=int, default=6)
    spectrum.add_argument("--n-max", type=int, default=DEFAULT_SPECTRUM_N)
    spectrum.add_argument(
        "--dump-generator",
        type=int,
        default=None,
        metavar="S",
        help="バンド S の生成子 (diag, upper, lower) を CSV で出力する",
    )
    spectrum.add_argument("--out", type=Path, default=None, help="CSV の出力先 (既定: 標準出力)")

    moments = sub.add_parser("moments", help="各初期状態のモーメントと加速次数を JSON で表示する")
    _add_source_options(moments)
    moments.add_argument("--l-max", type=int, default=DEFAULT_L_MAX)
    return parser


def _scenario_from_args(args: argparse.Namespace) -> Scenario:
    if getattr(args, "figure", None):
        scenario = builtin_scenario(args.figure)
    elif getattr(args, "builtin", None):
        scenario = builtin_scenario(args.builtin)
    else:
        scenario = load_scenario(args.config)
    if not hasattr(args, "out_dir"):
        return scenario
    return scenario.with_overrides(
        n_max=args.n_max,
        measures=args.measure,
        units=args.units,
        method=args.method,
    )


def _emit(payload: bytes, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(payload.decode("utf-8"))
    else:
        write_output(out, payload)


def _run(args: argparse.Namespace) -> int:
    if args.command in ("simulate", "reproduce"):
        result = simulate_command(_scenario_from_args(args), Path(args.out_dir), args.workers)
        return result.exit_code
    if args.command == "mpemba":
        result = run_scenario(_scenario_from_args(args), args.workers)
        if not args.no_write:
            write_results(result, Path(args.out_dir))
        summary = {"scenario": result.report["scenario"], "crossings": result.report["crossings"]}
        if "warning" in result.report:
            summary["warning"] = result.report["warning"]
        _emit(report_to_json(summary) + b"\n", None)
        return result.exit_code
    if args.command == "spectrum":
        params = make_bath(args.gamma, args.omega0, args.n_th)
        payload = spectrum_command(params, args.alpha_max, args.s_max, args.n_max, args.dump_generator)
        _emit(payload, args.out)
        return 0
    if args.command == "moments":
        report = moments_report(_scenario_from_args(args), args.l_max)
        _emit(report_to_json(report) + b"\n", None)
        return 0
    raise ValueError(f"不明なサブコマンドです: {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except ValueError as exc:
        print(f"エラー: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except RuntimeError as exc:
        print(f"数値計算に失敗しました: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
