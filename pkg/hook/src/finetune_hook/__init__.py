"""Reference implementation of the external fine-tune hook contract."""

from .config import HookConfig
from .train import DESCRIPTOR_FILENAME, run_hook

__all__ = ["HookConfig", "run_hook", "DESCRIPTOR_FILENAME"]
