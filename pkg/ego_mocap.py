"""
Ego Mocap - 命令列入口點
"""
from src.main import main


if __name__ == "__main__":
    main()
