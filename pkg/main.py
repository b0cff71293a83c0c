#!/usr/bin/env python3
"""网络博弈干预工具 - 分析博弈、仿真干预协议、批量扫描，输出 CSV/JSON 结果"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from modules import (
    LyapunovReferences,
    ProtocolKind,
    SimConfig,
    analyze_game,
    convergence_metrics,
    load_config,
    load_scenario,
    make_protocol,
    optimal_intervention,
    random_initial_state,
    save_results,
    simulate,
    social_optimum,
)
from modules.errors import (
    AssumptionViolated,
    DivergenceError,
    MissingReference,
    NetworkGameError,
    ProtocolPreconditionError,
    SolverError,
)
from modules.scenarios import write_json
from modules.sets import MEMBERSHIP_TOL
from modules.sim import parallel_map

EXIT_OK = 0
EXIT_UNREADABLE = 1
EXIT_ASSUMPTION = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4
EXIT_PRECONDITION = 5

# 协议前提失败（包括谱条件不成立导致无法求 x_opt）
PRECONDITION_ERRORS = (ProtocolPreconditionError, AssumptionViolated, MissingReference)

# 扫描中视为失败的组合状态
FAILED_STATUSES = ('not_converged', 'diverged', 'solver_failed')


def _report_error(e: Exception):
    print(f"{type(e).__name__}: {e}", file=sys.stderr)


def _sim_config(config: dict, spec, args) -> SimConfig:
    """优先级：命令行 > 场景 sim 块 > 配置文件 > 默认值"""
    base = SimConfig.from_dict({**config['sim'], **spec.sim_block})
    return base.with_overrides(
        h=getattr(args, 'h', None),
        t_max=getattr(args, 't_max', None),
        record_stride=getattr(args, 'stride', None),
    )


def _initial_state(spec, seed):
    if seed is not None:
        return random_initial_state(spec.game, seed)
    if spec.seed is not None:
        return random_initial_state(spec.game, spec.seed)
    return spec.x0


def run_simulation(spec, kind: ProtocolKind, sim_config: SimConfig, solver: dict, x0):
    """构造协议并仿真一次

    x_opt、u_s、aP 只作为收敛参考与 Lyapunov 监测量，协议本身不读取它们。

    Returns:
        tuple: (轨迹, 收敛指标)
    """
    game = spec.game
    x_opt = social_optimum(game, tol=solver['tol'], max_iters=solver['max_iters'])
    x_s = spec.x_s if spec.x_s is not None else x_opt
    options = spec.protocol_options(x_opt=x_opt, x_s=x_s, x0=x0)
    state = make_protocol(kind, game, options)

    references = LyapunovReferences(x_opt=x_opt, aP=np.array(game.aP))
    x_ref = x_opt
    if kind is ProtocolKind.DYNAMIC:
        x_ref = x_s
        # 跳过验证的 x_s 可能不在 𝒳 内，此时没有 u_s，V 记为 NaN
        if game.action_set.contains(x_s, MEMBERSHIP_TOL):
            verdict = optimal_intervention(game, x_s)
            if verdict.feasible:
                references.u_s = verdict.u_opt

    traj = simulate(game, state, x0, sim_config, x_ref, references)
    return traj, convergence_metrics(traj, x_ref)


def cmd_analyze(args, config: dict, spec) -> int:
    """谱条件检查、x_NE、x_opt、u_opt 判定与福利差，写出 analysis.json"""
    solver = config['solver']
    try:
        report = analyze_game(spec.game, tol=solver['tol'], max_iters=solver['max_iters'])
    except NetworkGameError as e:
        _report_error(e)
        return EXIT_UNREADABLE

    save_results(None, report, args.out)
    print(f"分析结果已保存到: {os.path.join(args.out, 'analysis.json')}", file=sys.stderr)

    if not report.assumptions.assumption2_ok:
        print(f"谱条件不成立: margin = {report.assumptions.margin:.6g}", file=sys.stderr)
        return EXIT_ASSUMPTION
    if not report.feasible:
        print(f"不存在可行的开环干预，残差 {report.verdict.residual:.3e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate(args, config: dict, spec) -> int:
    """仿真一个协议，写出 trajectory.csv 与 summary.json"""
    kind = ProtocolKind.parse(args.protocol) if args.protocol else spec.protocol
    try:
        sim_config = _sim_config(config, spec, args)
    except ValueError as e:
        _report_error(e)
        return EXIT_UNREADABLE
    x0 = _initial_state(spec, args.seed)

    try:
        traj, metrics = run_simulation(spec, kind, sim_config, config['solver'], x0)
    except PRECONDITION_ERRORS as e:
        _report_error(e)
        return EXIT_PRECONDITION
    except (DivergenceError, SolverError) as e:
        _report_error(e)
        return EXIT_NOT_CONVERGED

    save_results(traj, None, args.out, metrics)
    print(f"轨迹已保存到: {os.path.join(args.out, 'trajectory.csv')}", file=sys.stderr)

    if not traj.converged:
        print(f"在 t_max = {sim_config.t_max:g} 内未收敛，终点误差 {metrics.final_error:.3e}",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    if metrics.lyapunov_violations:
        print(f"Lyapunov 函数上升 {metrics.lyapunov_violations} 次", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _run_cell(cell: dict) -> dict:
    """扫描中的单个 (协议, 种子) 组合，在子进程中执行"""
    spec = load_scenario(cell['scenario'])
    kind = ProtocolKind.parse(cell['protocol'])
    entry = {'protocol': kind.value, 'seed': cell['seed'], 'dir': cell['dir']}
    x0 = random_initial_state(spec.game, cell['seed'])
    sim_config = SimConfig.from_dict(cell['sim'])
    try:
        traj, metrics = run_simulation(spec, kind, sim_config, cell['solver'], x0)
    except PRECONDITION_ERRORS as e:
        entry.update(status='skipped', error=f"{type(e).__name__}: {e}")
        return entry
    except DivergenceError as e:
        entry.update(status='diverged', error=f"{type(e).__name__}: {e}")
        return entry
    except SolverError as e:
        entry.update(status='solver_failed', error=f"{type(e).__name__}: {e}")
        return entry

    save_results(traj, None, cell['dir'], metrics)
    ok = traj.converged and metrics.lyapunov_violations == 0
    entry.update(status='converged' if ok else 'not_converged', **metrics.to_dict())
    return entry


def cmd_sweep(args, config: dict, spec) -> int:
    """协议 × 种子的笛卡尔积，每个组合一个子目录，最后写出 index.json"""
    try:
        protocols = [ProtocolKind.parse(p.strip()) for p in args.protocols.split(',')] \
            if args.protocols else list(ProtocolKind)
        seeds = [int(s) for s in args.seeds.split(',')] if args.seeds else list(config['sweep']['seeds'])
        sim_config = _sim_config(config, spec, args)
    except ValueError as e:
        _report_error(e)
        return EXIT_UNREADABLE
    workers = args.workers if args.workers is not None else config['sweep']['workers']

    cells = [
        {
            'scenario': os.path.abspath(args.scenario),
            'protocol': kind.value,
            'seed': seed,
            'sim': sim_config.to_dict(),
            'solver': dict(config['solver']),
            'dir': os.path.join(args.out, f'{kind.value}_seed{seed}'),
        }
        for kind in protocols for seed in seeds
    ]

    entries = parallel_map(_run_cell, cells, workers=workers)

    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, 'index.json'), {'label': spec.label, 'cells': entries})
    print(f"扫描完成: {len(entries)} 个组合，索引已保存到 {os.path.join(args.out, 'index.json')}",
          file=sys.stderr)

    failed = [e for e in entries if e['status'] in FAILED_STATUSES]
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    arg_parser = argparse.ArgumentParser(
        description='网络博弈干预工具 - 求纳什均衡与社会最优，仿真开环、静态反馈、动态积分、自适应四种干预'
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scenario', required=True, help='场景 JSON 文件路径')
    common.add_argument('--out', default='output', help='输出目录（默认: ./output）')
    common.add_argument('-c', '--config', default=None, help='配置文件路径（默认: ./config.json）')
    common.add_argument('-v', '--verbose', action='store_true', help='输出 INFO 级别日志')

    sim_flags = argparse.ArgumentParser(add_help=False)
    sim_flags.add_argument('--h', type=float, default=None, help='积分步长')
    sim_flags.add_argument('--t-max', type=float, default=None, help='仿真时长上限')
    sim_flags.add_argument('--stride', type=int, default=None, help='轨迹记录间隔（步）')

    commands = arg_parser.add_subparsers(dest='command', required=True)
    commands.add_parser('analyze', parents=[common], help='检查谱条件并求解均衡')

    simulate_parser = commands.add_parser('simulate', parents=[common, sim_flags], help='仿真一个干预协议')
    simulate_parser.add_argument('--protocol', choices=[k.value for k in ProtocolKind], default=None,
                                 help='干预协议（默认: 场景文件中的 protocol）')
    simulate_parser.add_argument('--seed', type=int, default=None, help='随机初始点的种子')

    sweep_parser = commands.add_parser('sweep', parents=[common, sim_flags], help='批量扫描协议与种子')
    sweep_parser.add_argument('--protocols', default=None, help='逗号分隔的协议列表（默认: 全部）')
    sweep_parser.add_argument('--seeds', default=None, help='逗号分隔的种子列表（默认: 配置文件）')
    sweep_parser.add_argument('--workers', type=int, default=None, help='并行进程数')
    return arg_parser


def main(argv=None) -> int:
    """主函数，返回退出码"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )

    try:
        config = load_config(args.config)
        spec = load_scenario(args.scenario)
    except (OSError, json.JSONDecodeError, NetworkGameError) as e:
        print(f"错误: 无法读取场景 {args.scenario}", file=sys.stderr)
        _report_error(e)
        return EXIT_UNREADABLE

    handlers = {'analyze': cmd_analyze, 'simulate': cmd_simulate, 'sweep': cmd_sweep}
    return handlers[args.command](args, config, spec)


if __name__ == '__main__':
    sys.exit(main())
