"""bip-lab 命令行前端

每个子命令读取输入文件，调用对应服务，得到一份 CheckReport；
run() 写出报告并把结果映射为退出码。
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO

import numpy as np
from pydantic import ValidationError

from .config import settings
from .exceptions import BipLabError, InputError, InterpolationError
from .models import CheckReport, CheckResult, ExperimentConfig, ProbMeasure
from .services import (
    curvature_service,
    interpolation_service,
    pmgh_service,
    report_service,
    sobolev_service,
    space_service,
    transport_service,
)
from .utils.io import (
    load_function,
    load_measure,
    load_pairs,
    load_space,
    parse_embedded,
    parse_pairs,
    parse_profile,
    parse_profile_data,
    parse_space,
    read_json_file,
    write_csv,
)
from .utils.logger import cli_logger
from .utils.parallel import parallel_map

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2

# 命令行参数名 -> params 键
PARAM_FLAGS = ("q", "K", "N", "levels", "profile", "kind", "o", "p", "p1", "p2",
               "family_depth", "pair_budget", "mode", "out")
PATH_FLAGS = ("space", "mu0", "mu1", "pairs", "f", "config")


def _prefixed(report: CheckReport, prefix: str) -> List[CheckResult]:
    return [c.model_copy(update={"check_id": f"{prefix}/{c.check_id}"}) for c in report.checks]


# ----------------------------------------------------------------------
# 子命令
# ----------------------------------------------------------------------

def _run_validate(config: ExperimentConfig) -> CheckReport:
    space = load_space(config.paths["space"])
    result = space_service.validate_space(space)
    checks = [CheckResult.inequality("validate/violations", "invariant violations <= 0",
                                     float(len(result.violations)), 0.0)]
    for k, v in enumerate(result.violations):
        checks.append(CheckResult.inequality(
            f"validate/{v.kind}/{k:04d}", v.message, 1.0, 0.0,
            details={"indices": list(v.indices), "amount": v.amount}))
    data: Dict[str, Any] = {"points": space.n, "total_mass": space.total_mass}
    if result.passed:
        data["diameter"] = space_service.diameter(space, range(space.n))
    return CheckReport(name="validate", checks=tuple(checks), data=data)


def _run_wasserstein(config: ExperimentConfig) -> CheckReport:
    space = load_space(config.paths["space"])
    space_service.require_valid(space)
    mu0 = load_measure(config.paths["mu0"], space.n)
    mu1 = load_measure(config.paths["mu1"], space.n)
    q = float(config.param("q", 2.0))
    result = transport_service.wasserstein(space, q, mu0, mu1)
    plan = result.coupling.plan
    checks = (
        CheckResult.inequality("wasserstein/source_marginal", "max |alpha 1 - mu0| <= tol",
                               float(np.abs(plan.sum(axis=1) - mu0.mass).max()),
                               settings.MARGINAL_TOL),
        CheckResult.inequality("wasserstein/target_marginal", "max |alpha^T 1 - mu1| <= tol",
                               float(np.abs(plan.sum(axis=0) - mu1.mass).max()),
                               settings.MARGINAL_TOL),
    )
    print(f"W_{q:g} = {result.distance:.12g}, W_{q:g}^{q:g} = {result.cost:.12g}",
          file=_console(config.output))
    out = config.param("out")
    if out:
        write_csv(out, ("source", "target", "mass"), result.coupling.pairs())
    return CheckReport(name="wasserstein", checks=checks,
                       data={"q": q, "distance": result.distance, "cost": result.cost})


def _run_interpolate(config: ExperimentConfig) -> CheckReport:
    space = load_space(config.paths["space"])
    space_service.require_valid(space)
    mu0 = load_measure(config.paths["mu0"], space.n)
    mu1 = load_measure(config.paths["mu1"], space.n)
    q = float(config.param("q", 2.0))
    K = float(config.param("K", 0.0))
    levels = config.param("levels")
    geodesic = interpolation_service.dyadic_geodesic(space, q, mu0, mu1, K,
                                                     None if levels is None else int(levels))
    bound = interpolation_service.dyadic_bound_report(space, K, geodesic)
    consistency = interpolation_service.geodesic_consistency(space, geodesic)
    checks = tuple(bound.checks) + tuple(consistency.checks)
    data = {**bound.data, "met_target": geodesic.met_target,
            "input_bound": geodesic.input_bound, "levels": geodesic.level}
    if geodesic.level >= 1:
        spreading = interpolation_service.spreading_check(space, mu0, mu1, geodesic.at(0.5), K)
        checks += tuple(spreading.checks)
        data["spreading"] = spreading.data
    out = config.param("out")
    if out:
        write_csv(out, ("time", "point", "mass", "density", "level_cap"),
                  interpolation_service.trace_rows(space, geodesic))
    return CheckReport(name="interpolate", checks=checks, flags=bound.flags, data=data)


def _run_bip_verify(config: ExperimentConfig) -> CheckReport:
    space = load_space(config.paths["space"])
    space_service.require_valid(space)
    pairs = load_pairs(config.paths["pairs"], space.n)
    text = config.param("profile")
    if not text:
        raise InputError("bip-verify 需要 --profile")
    profile = parse_profile(text)
    levels = config.param("levels")
    return interpolation_service.bip_verify(space, float(config.param("q", 2.0)), pairs,
                                            profile, None if levels is None else int(levels))


def _curvature_pair(space, kind: str, q: float, K: float, N: Optional[float],
                    levels: Optional[int], o: Optional[int],
                    mu0: ProbMeasure, mu1: ProbMeasure) -> CheckReport:
    if kind == "mcp":
        if o is None:
            o = int(mu1.support[0])
        mu1 = ProbMeasure.dirac(space.n, o)
    geodesic = interpolation_service.dyadic_geodesic(space, q, mu0, mu1, K, levels)
    if kind == "cd_infty":
        return curvature_service.cd_infty_check(space, q, K, mu0, mu1, geodesic)
    if kind == "mcp":
        return curvature_service.mcp_check(space, q, K, N, mu0, o, geodesic)
    return curvature_service.cd_negative_check(space, q, K, N, mu0, mu1, geodesic)


def _run_curvature_check(config: ExperimentConfig) -> CheckReport:
    space = load_space(config.paths["space"])
    space_service.require_valid(space)
    pairs = load_pairs(config.paths["pairs"], space.n)
    kind = config.param("kind", "cd_infty")
    if kind not in ("cd_infty", "mcp", "cd_negative"):
        raise InputError(f"未知的曲率检查类型: {kind}")
    N = config.param("N")
    if kind != "cd_infty" and N is None:
        raise InputError(f"{kind} 检查需要 --N")
    q = float(config.param("q", 2.0))
    K = float(config.param("K", 0.0))
    levels = config.param("levels")
    o = config.param("o")

    checks: List[CheckResult] = []
    flags: List[str] = []
    data: Dict[str, Any] = {"kind": kind, "K": K, "N": N, "q": q, "pairs": []}
    for index, (mu0, mu1) in enumerate(pairs):
        prefix = f"pair_{index:04d}"
        try:
            report = _curvature_pair(space, kind, q, K, None if N is None else float(N),
                                     None if levels is None else int(levels),
                                     None if o is None else int(o), mu0, mu1)
        except InterpolationError as e:
            # 该对没有满足密度上界的二进测地线
            flags.append(f"{prefix}: {e}")
            checks.append(CheckResult.inequality(
                f"{prefix}/geodesic", "dyadic midpoint excess <= 0",
                float(e.excess) if e.excess is not None else 1.0, 0.0,
                details={"level": e.level}))
            continue
        checks.extend(_prefixed(report, prefix))
        flags.extend(f"{prefix}: {flag}" for flag in report.flags)
        data["pairs"].append(report.data)
    return CheckReport(name=f"curvature_check/{kind}", checks=tuple(checks),
                       flags=tuple(flags), data=data)


def _run_sobolev(config: ExperimentConfig) -> CheckReport:
    space = load_space(config.paths["space"])
    space_service.require_valid(space)
    f = load_function(config.paths["f"], space.n)
    q = float(config.param("q", 2.0))
    depth = int(config.param("family_depth", 2))
    budget = int(config.param("pair_budget", space.n * (space.n - 1)))
    family = sobolev_service.build_geod_family(space, q, depth, budget, include_reversed=True)

    if config.param("mode", "solve") == "compare":
        return sobolev_service.gradient_p_comparison(
            space, f, float(config.param("p1", 1.5)), float(config.param("p2", 3.0)), family)

    p = float(config.param("p", 2.0))
    candidate = sobolev_service.minimal_weak_upper_gradient(space, f, p, family)
    master = sobolev_service.build_master_plan(family, q, space)
    report = sobolev_service.master_plan_check(space, f, candidate, master, family)
    out = config.param("out")
    if out:
        write_csv(out, ("point", "label", "f", "G"),
                  [(i, space.label(i), float(f.values[i]), float(candidate.values[i]))
                   for i in range(space.n)])
    return report.model_copy(update={
        "name": "sobolev",
        "data": {**report.data, "p": p, "objective": candidate.objective,
                 "max_residual": candidate.max_residual,
                 "norm": candidate.norm(space.weight), "family_size": family.size},
    })


def _run_pmgh(config: ExperimentConfig) -> CheckReport:
    """pmGH 配置文件格式:

        {"ambient": 空间, "limit": {"space": 空间, "embedding": [...]},
         "sequence": [{"space": 空间, "embedding": [...], "profile": 轮廓}, ...],
         "pairs": 极限空间上的测度对, "limit_profile": 轮廓（可选）,
         "q": 2, "levels": 4, "tail": null, "cutoff_eta": null}
    """
    path = config.paths["config"]
    data = read_json_file(path, "pmGH 配置")
    if not isinstance(data, dict):
        raise InputError(f"{path}: pmGH 配置必须是 JSON 对象")
    for key in ("ambient", "limit", "sequence", "pairs"):
        if key not in data:
            raise InputError(f"{path}: 缺少字段 '{key}'")
    ambient = parse_space(data["ambient"], f"{path}.ambient")
    limit = parse_embedded(data["limit"], f"{path}.limit")
    if not isinstance(data["sequence"], list):
        raise InputError(f"{path}: 字段 'sequence' 必须是数组")
    sequence, profiles = [], []
    for k, entry in enumerate(data["sequence"]):
        source = f"{path}.sequence[{k}]"
        sequence.append(parse_embedded(entry, source))
        profiles.append(parse_profile_data(entry.get("profile"), f"{source}.profile"))
    pairs = parse_pairs(data["pairs"], limit.space.n, f"{path}.pairs")
    limit_profile = data.get("limit_profile")
    levels = data.get("levels", config.param("levels"))
    return pmgh_service.pmgh_stability_check(
        sequence, profiles, limit, ambient, float(data.get("q", config.param("q", 2.0))), pairs,
        limit_profile=None if limit_profile is None
        else parse_profile_data(limit_profile, f"{path}.limit_profile"),
        cutoff_eta=data.get("cutoff_eta"),
        levels=None if levels is None else int(levels),
        tail=data.get("tail"),
    )


def _batch_configs(path: str) -> List[ExperimentConfig]:
    """批处理配置 {"experiments": [{"command", "paths", "params"}, ...]}，相对路径以配置文件目录为基准"""
    data = read_json_file(path, "批处理")
    if not isinstance(data, dict) or not isinstance(data.get("experiments"), list):
        raise InputError(f"{path}: 批处理配置必须是含 'experiments' 数组的 JSON 对象")
    base = Path(path).parent
    configs = []
    for k, entry in enumerate(data["experiments"]):
        if not isinstance(entry, dict):
            raise InputError(f"{path}: experiments[{k}] 必须是 JSON 对象")
        if entry.get("command") == "report":
            raise InputError(f"{path}: experiments[{k}] 不能嵌套 report 命令")
        paths = {key: str(base / value) for key, value in (entry.get("paths") or {}).items()}
        params = dict(entry.get("params") or {})
        if params.get("out"):
            params["out"] = str(base / params["out"])
        try:
            configs.append(ExperimentConfig(command=entry.get("command", ""),
                                            paths=paths, params=params))
        except ValidationError as e:
            raise InputError(f"{path}: experiments[{k}]: {_first_error(e)}") from e
    return configs


def _run_report(config: ExperimentConfig) -> CheckReport:
    configs = _batch_configs(config.paths["config"])
    reports = parallel_map(execute, configs, settings.BIPLAB_THREADS)
    return report_service.merge("report", reports)


COMMAND_HANDLERS: Dict[str, Callable[[ExperimentConfig], CheckReport]] = {
    "validate": _run_validate,
    "wasserstein": _run_wasserstein,
    "interpolate": _run_interpolate,
    "bip-verify": _run_bip_verify,
    "curvature-check": _run_curvature_check,
    "sobolev": _run_sobolev,
    "pmgh": _run_pmgh,
    "report": _run_report,
}


def execute(config: ExperimentConfig) -> CheckReport:
    """执行一个实验，返回报告（不写文件、不映射退出码）"""
    cli_logger.info(f"执行命令: {config.command}")
    return COMMAND_HANDLERS[config.command](config)


def run(config: ExperimentConfig) -> int:
    """执行实验并写出报告

    Returns:
        int: 0 全部通过，1 有检查失败，2 输入错误或其他库内错误
    """
    try:
        report = execute(config)
        if config.output:
            report_service.emit_report([report], config.format, config.output)
        else:
            print(json.dumps(report_service.document([report]), indent=2, ensure_ascii=False))
        _print_summary(report, _console(config.output))
        return EXIT_PASS if report.passed else EXIT_CHECK_FAILED
    except InputError as e:
        cli_logger.error(f"输入错误: {e}")
        print(f"输入错误: {e}", file=_console(config.output))
        return EXIT_INPUT_ERROR
    except BipLabError as e:
        cli_logger.error(f"{type(e).__name__}: {e}")
        print(f"错误: {type(e).__name__}: {e}", file=_console(config.output))
        return EXIT_INPUT_ERROR


def _console(report_path: Optional[str]) -> TextIO:
    """提示文字的输出流：报告写到 stdout 时改用 stderr"""
    return sys.stdout if report_path else sys.stderr


def _print_summary(report: CheckReport, stream: TextIO) -> None:
    failures = report.failures
    print(f"检查: {len(report.checks)} 项，失败 {len(failures)} 项", file=stream)
    for check in failures[:10]:
        print(f"  失败 {check.check_id}: lhs={check.lhs:.6g} rhs={check.rhs:.6g}", file=stream)
    if len(failures) > 10:
        print(f"  ……另有 {len(failures) - 10} 项失败", file=stream)
    for flag in report.flags:
        print(f"  注意: {flag}", file=stream)


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    return str(first.get("msg", error))


# ----------------------------------------------------------------------
# 参数解析
# ----------------------------------------------------------------------

def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--report', default=None, help='报告输出路径（缺省打印到标准输出）')
    parser.add_argument('--format', default='json', choices=('json', 'csv'), help='报告格式')


def _add_exponent(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--q', type=float, default=None, help='运输指数 q ∈ (1, ∞)，默认 2')


def build_parser() -> argparse.ArgumentParser:
    """构造参数解析器"""
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="有限度量测度空间上的最优运输与有界插值性质实验",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例用法:
  python main.py validate --space line5.json
  python main.py wasserstein --space S.json --mu0 a.json --mu1 b.json --q 2
  python main.py interpolate --space S.json --mu0 a.json --mu1 b.json --K -1 --levels 4 --out trace.csv
  python main.py bip-verify --space S.json --pairs pairs.json --profile '{"kind":"cd_infty","K":-1}'
  python main.py curvature-check --space S.json --kind cd_infty --K -1 --q 2 --pairs pairs.json
  python main.py sobolev --space S.json --f f.json --p 2 --family-depth 2 --out gradient.csv
  python main.py sobolev compare --space S.json --f f.json --p1 1.5 --p2 3
  python main.py report --config batch.json --report all.csv --format csv

环境变量: BIPLAB_THREADS 并行上限，BIPLAB_SEED 随机种子（默认 0）
        """
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {settings.APP_VERSION}")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate', help='校验空间文件')
    p.add_argument('--space', required=True, help='空间 JSON 文件')
    _add_output(p)

    for name, help_text in (('wasserstein', '计算 W_q 与最优耦合'),
                            ('interpolate', '构造密度有界的二进测地线')):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--space', required=True, help='空间 JSON 文件')
        p.add_argument('--mu0', required=True, help='起点测度 JSON 文件')
        p.add_argument('--mu1', required=True, help='终点测度 JSON 文件')
        _add_exponent(p)
        if name == 'interpolate':
            p.add_argument('--K', type=float, default=None, help='曲率下界，默认 0')
            p.add_argument('--levels', type=int, default=None, help='二进层数')
            p.add_argument('--out', default=None, help='trace.csv 输出路径')
        else:
            p.add_argument('--out', default=None, help='耦合 CSV 输出路径')
        _add_output(p)

    p = sub.add_parser('bip-verify', help='验证有界插值性质')
    p.add_argument('--space', required=True, help='空间 JSON 文件')
    p.add_argument('--pairs', required=True, help='测度对 JSON 文件')
    p.add_argument('--profile', required=True, help='轮廓 JSON 字符串或文件')
    p.add_argument('--levels', type=int, default=None, help='二进层数')
    _add_exponent(p)
    _add_output(p)

    p = sub.add_parser('curvature-check', help='曲率维数条件检查')
    p.add_argument('--space', required=True, help='空间 JSON 文件')
    p.add_argument('--pairs', required=True, help='测度对 JSON 文件')
    p.add_argument('--kind', default='cd_infty', choices=('cd_infty', 'mcp', 'cd_negative'))
    p.add_argument('--K', type=float, default=None, help='曲率下界，默认 0')
    p.add_argument('--N', type=float, default=None, help='维数参数（mcp / cd_negative）')
    p.add_argument('--o', type=int, default=None, help='MCP 的收缩中心，缺省取终点测度支撑的首点')
    p.add_argument('--levels', type=int, default=None, help='二进层数')
    _add_exponent(p)
    _add_output(p)

    p = sub.add_parser('sobolev', help='最小弱上梯度')
    p.add_argument('mode', nargs='?', default='solve', choices=('solve', 'compare'))
    p.add_argument('--space', required=True, help='空间 JSON 文件')
    p.add_argument('--f', required=True, help='函数 JSON 文件')
    p.add_argument('--p', type=float, default=None, help='Sobolev 指数，默认 2')
    p.add_argument('--p1', type=float, default=None, help='比较模式的第一个指数')
    p.add_argument('--p2', type=float, default=None, help='比较模式的第二个指数')
    p.add_argument('--family-depth', dest='family_depth', type=int, default=None,
                   help='Geod 计划族限制深度，默认 2')
    p.add_argument('--pair-budget', dest='pair_budget', type=int, default=None,
                   help='测度对个数上限')
    p.add_argument('--out', default=None, help='gradient.csv 输出路径')
    _add_exponent(p)
    _add_output(p)

    for name, help_text in (('pmgh', 'BIP 的 pmGH 稳定性检查'), ('report', '批处理多个实验')):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--config', required=True, help='配置 JSON 文件')
        _add_output(p)
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """由解析结果构造 ExperimentConfig（校验失败抛出 pydantic ValidationError）"""
    paths = {key: getattr(args, key) for key in PATH_FLAGS if getattr(args, key, None)}
    params = {key: getattr(args, key) for key in PARAM_FLAGS
              if getattr(args, key, None) is not None}
    return ExperimentConfig(command=args.command, paths=paths, params=params,
                            output=args.report, format=args.format)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    console = _console(args.report)
    print("=" * 50, file=console)
    print(f"bip-lab {args.command} - 开始执行", file=console)
    print("=" * 50, file=console)
    try:
        config = build_config(args)
    except ValidationError as e:
        print(f"配置错误: {_first_error(e)}", file=console)
        return EXIT_INPUT_ERROR
    try:
        code = run(config)
    except KeyboardInterrupt:
        print("\n用户中断执行", file=console)
        return EXIT_CHECK_FAILED
    except Exception as e:
        cli_logger.exception("未预期的错误")
        print(f"未预期的错误: {e}", file=console)
        return EXIT_INPUT_ERROR
    print("=" * 50, file=console)
    print("全部检查通过!" if code == EXIT_PASS else f"执行结束，退出码 {code}", file=console)
    print("=" * 50, file=console)
    return code


if __name__ == '__main__':
    sys.exit(main())
