"""bip-lab：有限度量测度空间上的最优运输与有界插值性质实验库"""

from .config import settings

__version__ = settings.APP_VERSION
