import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from bip_lab.config import settings


def _parse_size(size: str) -> int:
    """把 "10MB" / "512KB" / "2048" 形式的大小转换为字节数"""
    text = size.strip().upper()
    for suffix, factor in (("MB", 1024 * 1024), ("KB", 1024), ("B", 1)):
        if text.endswith(suffix):
            return int(float(text[: -len(suffix)]) * factor)
    return int(text)


class LoggerFactory:
    """日志工厂类，用于创建统一格式的日志记录器"""

    _FORMAT = settings.LOG_FORMAT
    _DATE_FORMAT = settings.LOG_DATE_FORMAT

    @staticmethod
    def create_logger(
        name: str,
        log_file: Optional[str] = None,
        level: Optional[int] = None
    ) -> logging.Logger:
        """创建一个新的日志记录器

        同名记录器只配置一次，重复调用直接返回已有实例。

        Args:
            name: 日志记录器名称
            log_file: 日志文件路径，如果为None则只输出到控制台
            level: 日志级别，默认取 settings.LOG_LEVEL

        Returns:
            logging.Logger: 配置好的日志记录器
        """
        logger = logging.getLogger(f"bip_lab.{name}")
        if logger.handlers:
            return logger

        if level is None:
            level = logging.DEBUG if settings.DEBUG else getattr(
                logging, settings.LOG_LEVEL.upper(), logging.WARNING)
        logger.setLevel(level)
        logger.propagate = False

        # 创建格式化器
        formatter = logging.Formatter(
            LoggerFactory._FORMAT,
            LoggerFactory._DATE_FORMAT
        )

        # 添加控制台处理器（stderr，避免污染命令行的报告输出）
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        # 如果指定了日志文件，添加文件处理器
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)

            # 创建轮转文件处理器
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=_parse_size(settings.LOG_FILE_MAX_SIZE),
                backupCount=settings.LOG_FILE_BACKUP_COUNT,
                encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        return logger


def _log_file_for(name: str) -> Optional[str]:
    if not settings.LOG_TO_FILE:
        return None
    return os.path.join(settings.LOG_DIR, f"{name.lower()}.log")


# 获取日志记录器的函数
def get_logger(name: str) -> logging.Logger:
    """获取指定名称的日志记录器

    Args:
        name: 日志记录器名称

    Returns:
        logging.Logger: 配置好的日志记录器
    """
    return LoggerFactory.create_logger(name, _log_file_for(name))


# 服务层日志记录器
service_logger = get_logger('service')

# 求解器日志记录器（单纯形、线性规划、梯度求解）
solver_logger = get_logger('solver')

# 命令行日志记录器
cli_logger = get_logger('cli')
