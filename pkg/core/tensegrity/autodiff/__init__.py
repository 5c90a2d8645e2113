from .tape import (GradientTape, backward, detach, clip_gradients, gradient_norm, central_difference,
                   relative_error, checkpointed_rollout)

__all__ = ['GradientTape', 'backward', 'detach', 'clip_gradients', 'gradient_norm', 'central_difference',
           'relative_error', 'checkpointed_rollout']
