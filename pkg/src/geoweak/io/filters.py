"""语料过滤"""
import logging
from typing import Tuple

from ..core.models import Dataset

logger = logging.getLogger(__name__)


def filter_fair1m(d: Dataset, max_dim: int = 2000,
                  max_annotations: int = 100) -> Tuple[Dataset, int]:
    """保留宽高都不超过 max_dim 且标注数不超过 max_annotations 的图像

    Returns:
        (过滤后的数据集, 丢弃的图像数)
    """
    kept = [
        img for img in d.images
        if img.width <= max_dim and img.height <= max_dim
        and len(img.annotations) <= max_annotations
    ]
    dropped = len(d.images) - len(kept)
    if dropped:
        logger.info("分辨率/标注数过滤: 丢弃 %d 张图像", dropped)
    return d.with_images(kept), dropped
