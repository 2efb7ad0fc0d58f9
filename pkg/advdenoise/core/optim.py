# advdenoise/core/optim.py

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Tuple, Union
import logging

import numpy as np

from advdenoise.core.tensor import Parameter, Tensor
from advdenoise.utils.errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)

@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one parameter."""
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-3

    @classmethod
    def zeros_like(cls, param: Tensor, learning_rate: float, beta1: float = 0.9,
                   beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=np.zeros_like(param.data),
            second_moment=np.zeros_like(param.data),
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )

def adam_step(param: Tensor, grad: np.ndarray, state: AdamState) -> Tuple[Tensor, AdamState]:
    """Applies one bias-corrected Adam update to ``param`` in place."""
    grad = np.asarray(grad)
    if grad.shape != param.shape or state.first_moment.shape != param.shape:
        raise ShapeError(
            f"Adam: parameter {param.shape}, gradient {grad.shape}, "
            f"state {state.first_moment.shape} disagree"
        )
    if not np.all(np.isfinite(grad)):
        raise NumericalError("Adam: gradient contains non-finite values")

    state.step_count += 1
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grad
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * (grad * grad)

    m_hat = state.first_moment / (1.0 - state.beta1 ** state.step_count)
    v_hat = state.second_moment / (1.0 - state.beta2 ** state.step_count)
    param.data -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(param.dtype)
    return param, state

class Adam:
    """Adam over a set of named parameters.

    Frozen parameters (``trainable == False``) and parameters that received
    no gradient are skipped. All gradients are checked before any parameter
    is touched, so a rejected step leaves the model unchanged.
    """

    def __init__(
        self,
        parameters: Union[Mapping[str, Parameter], Iterable[Parameter]],
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if isinstance(parameters, Mapping):
            self.parameters: Dict[str, Parameter] = dict(parameters)
        else:
            self.parameters = {p.name or str(i): p for i, p in enumerate(parameters)}
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.states: Dict[str, AdamState] = {}
        self.steps = 0

    def zero_grad(self) -> None:
        for param in self.parameters.values():
            param.grad = None

    def step(self) -> None:
        pending = [
            (name, param) for name, param in self.parameters.items()
            if param.trainable and param.grad is not None
        ]
        for name, param in pending:
            if not np.all(np.isfinite(param.grad)):
                logger.error("Rejected Adam step", extra={'advdenoise_parameter': name})
                raise NumericalError(f"Non-finite gradient for parameter {name}")

        for name, param in pending:
            state = self.states.get(name)
            if state is None:
                state = AdamState.zeros_like(param, self.lr, self.betas[0], self.betas[1], self.eps)
                self.states[name] = state
            adam_step(param, param.grad, state)
        self.steps += 1
