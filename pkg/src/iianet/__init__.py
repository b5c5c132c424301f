"""iiANET: hybrid convolution/attention image classifier on a numpy autodiff tape."""
from .attention import Mhsa2d, Mhsa2dSpec, mhsa2d_forward, rel_pos_bias
from .blocks import IiaBlock, IiaBlockConfig, MBConv2
from .config import ModelConfig, StageConfig, load_config, parse_config, tiny_config
from .data import Dataset, bright_quadrant, load_dataset
from .errors import ConfigError, ContractError, DimensionError, FormatError, IianetError, LoadError
from .explain import Heatmap, grad_cam, render_pgm
from .model import IiaNet, ParamStore, build, load_checkpoint, load_params, save_checkpoint
from .profile import ProfileReport, profile
from .tensor import Tensor, grad, make_rng, no_grad
from .training import AdamW, cross_entropy, evaluate, train

__version__ = "0.1.0"
