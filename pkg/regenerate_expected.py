"""独立脚本 - 重新计算场景文件中冻结的 expected 回归数据

用法:
    python regenerate_expected.py <场景 JSON 文件路径>

示例:
    python regenerate_expected.py scenarios/cournot_taxes.json

说明:
    修改场景中的网络或参数后运行此脚本，用均衡求解器重新计算 x_NE 与 x_opt，
    并原地写回场景文件的 expected 字段。其余字段按统一格式重写。
"""

import sys
import os

# 将项目根目录加入路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.equilibria import analyze_game
from modules.errors import NetworkGameError
from modules.scenarios import load_scenario, save_scenario


def main():
    if len(sys.argv) < 2:
        print("用法: python regenerate_expected.py <场景 JSON 文件路径>")
        print("示例: python regenerate_expected.py scenarios/cournot_taxes.json")
        sys.exit(1)

    source_path = sys.argv[1]

    if not os.path.isfile(source_path):
        print(f"错误: 文件不存在 - {source_path}", file=sys.stderr)
        sys.exit(1)

    if not source_path.endswith('.json'):
        print("警告: 文件不是 .json 格式，继续尝试...", file=sys.stderr)

    try:
        spec = load_scenario(source_path)
        report = analyze_game(spec.game)
    except NetworkGameError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        sys.exit(1)

    if report.x_opt is None or report.x_ne is None:
        print("谱条件不成立或纳什均衡无法求解，未写回 expected", file=sys.stderr)
        sys.exit(1)

    spec.expected = {'x_ne': report.x_ne.tolist(), 'x_opt': report.x_opt.tolist()}
    save_scenario(spec, source_path)
    print(f"回归数据已重新生成: {source_path}")


if __name__ == '__main__':
    main()
