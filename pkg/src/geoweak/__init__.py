"""geoweak - 点标注弱半监督目标检测的数据流水线与评估工具"""

__version__ = "0.1.0"
