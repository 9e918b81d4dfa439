import numpy as np

from ..exception import InvalidArgumentException


def exponential_lr(base_lr, decay, epoch):
    """
    Learning rate of a 0-based epoch under per-epoch exponential decay: base_lr * decay ** epoch.
    """
    return base_lr * decay ** epoch


class _Optimizer:
    """
    Base class of the in-place optimizers. Slots hold one array per parameter name, stored in the
    parameter's dtype so that a checkpoint restores them bit-exactly.
    """

    slot_names = ()

    def __init__(self, parameters, lr):
        if lr <= 0:
            raise InvalidArgumentException(f"learning rate must be > 0, got {lr}")
        self.parameters = list(parameters)
        self.lr = lr
        self.t = 0
        self.slots = {slot: {p.name: np.zeros(p.shape, dtype=p.data.dtype) for p in self.parameters}
                      for slot in self.slot_names}

    def step(self, grads, lr=None):
        """
        Updates every parameter from its gradient.

        :type grads: dict
        :param grads: parameter name -> gradient Tensor (as returned by Tape.backward)

        :type lr: float
        :param lr: learning rate of this step, defaults to self.lr
        """
        lr = self.lr if lr is None else lr
        self.t += 1
        for p in self.parameters:
            g = grads[p.name].data.astype(np.float64)
            p.assign(self._update(p.name, p.data.astype(np.float64), g, lr).astype(p.data.dtype))

    def _update(self, name, value, grad, lr):
        raise NotImplementedError

    def state(self):
        """
        :rtype: dict
        :returns: {'t': step count, slot: {name: array}}
        """
        state = {'t': self.t}
        for slot in self.slot_names:
            state[slot] = {name: array.copy() for name, array in self.slots[slot].items()}
        return state

    def load_state(self, state):
        self.t = int(state['t'])
        for slot in self.slot_names:
            missing = set(self.slots[slot]) - set(state[slot])
            if missing:
                raise InvalidArgumentException(f"optimizer state lacks {slot} for {sorted(missing)}")
            for name in self.slots[slot]:
                self.slots[slot][name] = np.array(state[slot][name], dtype=self.slots[slot][name].dtype)


class Adam(_Optimizer):
    """
    Adam with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps).

    :type parameters: [Parameter]
    :param parameters: network weights to update

    :type lr: float
    :param lr: default learning rate

    :type betas: (float, float)
    :param betas: decay rates of the first and second moment

    :type eps: float
    :param eps: denominator term
    """

    slot_names = ('m', 'v')

    def __init__(self, parameters, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(parameters, lr)
        self.betas = betas
        self.eps = eps

    def _update(self, name, value, grad, lr):
        b1, b2 = self.betas
        dtype = self.slots['m'][name].dtype
        m = b1 * self.slots['m'][name].astype(np.float64) + (1 - b1) * grad
        v = b2 * self.slots['v'][name].astype(np.float64) + (1 - b2) * grad * grad
        self.slots['m'][name] = m.astype(dtype)
        self.slots['v'][name] = v.astype(dtype)
        m_hat = m / (1 - b1 ** self.t)
        v_hat = v / (1 - b2 ** self.t)
        return value - lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD(_Optimizer):
    """
    SGD with heavy-ball momentum: buf = momentum * buf + g; p -= lr * buf.
    """

    slot_names = ('momentum',)

    def __init__(self, parameters, lr=0.01, momentum=0.9):
        super().__init__(parameters, lr)
        if not 0 <= momentum < 1:
            raise InvalidArgumentException(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum

    def _update(self, name, value, grad, lr):
        buf = self.momentum * self.slots['momentum'][name].astype(np.float64) + grad
        self.slots['momentum'][name] = buf.astype(self.slots['momentum'][name].dtype)
        return value - lr * buf
