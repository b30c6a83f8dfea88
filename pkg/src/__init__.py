"""Ego Mocap - 頭戴魚眼相機的全身動作捕捉工具"""

__version__ = "1.0.0"
__author__ = "Ego Mocap Team"
__description__ = "Egocentric whole-body motion capture toolkit for head-mounted fisheye cameras"
