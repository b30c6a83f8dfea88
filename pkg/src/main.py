"""
Ego Mocap - 主程式入口
"""
import sys
import os

# 將專案根目錄加入 Python 路徑，確保可以正確導入所有模組
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.cli.app import run


def main():
    """主函數"""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
