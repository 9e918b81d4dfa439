import contextlib
from enum import Enum

import numpy as np

from ..exception import (DuplicateParameterException, InvalidArgumentException, ShapeMismatchException,
                         TapeConsumedException)

MAX_RANK = 5

_dtype_stack = [np.float32]


def get_default_dtype():
    """
    Gets the storage dtype used for newly created tensors.

    :rtype: numpy.dtype
    :returns: np.float32 normally, np.float64 inside verification_mode()
    """
    return _dtype_stack[-1]


@contextlib.contextmanager
def verification_mode():
    """
    Context manager switching tensor storage to 64-bit floats.

    Only gradient checks run in this mode; training always stores 32-bit values.
    """
    _dtype_stack.append(np.float64)
    try:
        yield
    finally:
        _dtype_stack.pop()


class Tensor:
    """
    Dense rank <= 5 array of floating point values.

    Tensors are never mutated after creation. A tensor produced while a Tape is recording
    carries a reference to that tape and its node index (grad_id).

    :type data: array_like
    :param data: values, copied into a contiguous array of the requested dtype

    :type dtype: numpy.dtype
    :param dtype: storage dtype, defaults to get_default_dtype()
    """

    __slots__ = ('data', 'tape', 'grad_id')

    def __init__(self, data, dtype=None):
        array = np.array(data, dtype=get_default_dtype() if dtype is None else dtype, copy=True, order='C')
        self._init(array, None, None)

    def _init(self, array, tape, grad_id):
        if array.ndim > MAX_RANK:
            raise InvalidArgumentException(f"tensors have at most {MAX_RANK} axes, got shape {array.shape}")
        array.flags.writeable = False
        self.data = array
        self.tape = tape
        self.grad_id = grad_id

    @classmethod
    def wrap(cls, array, tape=None, grad_id=None):
        """
        Wraps an array owned by the caller without copying it.
        """
        tensor = cls.__new__(cls)
        tensor._init(np.ascontiguousarray(array), tape, grad_id)
        return tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor.wrap(self.data)

    def __repr__(self):
        tracked = f", grad_id={self.grad_id}" if self.grad_id is not None else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{tracked})"


class ParameterKind(Enum):
    """
    Parameter families. Network weights and architecture logits are optimized by
    different optimizers and frozen alternately.
    """
    WEIGHT = 'weight'
    ARCH = 'arch'


class Parameter:
    """
    Named, optionally trainable tensor owned by a network.

    :type name: str
    :param name: unique dotted path inside the owning network

    :type tensor: Tensor
    :param tensor: current value

    :type kind: ParameterKind
    :param kind: ARCH for the beta/alpha logit vectors, WEIGHT otherwise

    :type trainable: bool
    :param trainable: false for batch-norm running statistics
    """

    def __init__(self, name, tensor, kind=ParameterKind.WEIGHT, trainable=True):
        self.name = name
        self.tensor = tensor
        self.kind = kind
        self.trainable = trainable

    @property
    def data(self):
        return self.tensor.data

    @property
    def shape(self):
        return self.tensor.shape

    def assign(self, array):
        """
        Replaces the value with a copy of array, keeping the current dtype and shape.
        """
        array = np.asarray(array)
        if array.shape != self.tensor.shape:
            raise ShapeMismatchException(f"assign {self.name}", self.tensor.shape, array.shape)
        self.tensor = Tensor(array, dtype=self.tensor.dtype)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape}, kind={self.kind.value}, trainable={self.trainable})"


class ParameterStore:
    """
    Registry of a network's parameters keyed by unique name.
    """

    def __init__(self):
        self._parameters = {}

    def register(self, name, array, kind=ParameterKind.WEIGHT, trainable=True):
        """
        Creates and registers a new Parameter.

        :raise: DuplicateParameterException if name is already registered

        :rtype: Parameter
        :returns: the new parameter
        """
        if name in self._parameters:
            raise DuplicateParameterException(f"parameter '{name}' is already registered")
        parameter = Parameter(name, Tensor(array), kind=kind, trainable=trainable)
        self._parameters[name] = parameter
        return parameter

    def parameters(self, kind=None, trainable=None):
        """
        Gets parameters in lexicographic name order, optionally filtered.

        :rtype: [Parameter]
        """
        return [p for _, p in sorted(self._parameters.items())
                if (kind is None or p.kind is kind) and (trainable is None or p.trainable == trainable)]

    def names(self):
        return sorted(self._parameters)

    def count(self, kind=None, trainable=None):
        """
        Counts scalar values held by the selected parameters.
        """
        return int(sum(p.data.size for p in self.parameters(kind=kind, trainable=trainable)))

    def state(self):
        """
        Gets a name -> array copy of every parameter.
        """
        return {name: p.data.copy() for name, p in sorted(self._parameters.items())}

    def load_state(self, state, strict=True):
        """
        Assigns values from a name -> array mapping.

        :type strict: bool
        :param strict: if true the mapping must name exactly this store's parameters
        """
        if strict and set(state) != set(self._parameters):
            missing = sorted(set(self._parameters) - set(state))
            unexpected = sorted(set(state) - set(self._parameters))
            raise InvalidArgumentException(f"parameter name mismatch: missing={missing}, unexpected={unexpected}")
        for name, array in state.items():
            if name in self._parameters:
                self._parameters[name].assign(array)

    def __getitem__(self, name):
        return self._parameters[name]

    def __contains__(self, name):
        return name in self._parameters

    def __iter__(self):
        return iter(self.parameters())

    def __len__(self):
        return len(self._parameters)


class _Node:
    __slots__ = ('kind', 'inputs', 'backward_fn')

    def __init__(self, kind, inputs, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """
    Ordered record of the operations applied to tracked tensors.

    A tape belongs to one search/training context and is consumed by a single backward pass.

    :type kinds: iterable of ParameterKind
    :param kinds: parameter kinds that become differentiable leaves when watched; other
                  parameters enter the graph as constants (this is how one family is frozen
                  while the other is optimized)

    :type owner: str
    :param owner: label of the owning context, used in error messages
    """

    def __init__(self, kinds=(ParameterKind.WEIGHT, ParameterKind.ARCH), owner=None):
        self.kinds = frozenset(kinds)
        self.owner = owner
        self.nodes = []
        self._leaves = {}
        self._consumed = False

    def _check_open(self):
        if self._consumed:
            raise TapeConsumedException(f"tape '{self.owner}' was already consumed by backward()")

    def watch(self, parameter):
        """
        Gets the tensor to use for parameter inside a recorded computation.

        :type parameter: Parameter
        :param parameter: the parameter to read

        :rtype: Tensor
        :returns: a tracked leaf if the parameter is trainable and of a watched kind, else its constant value
        """
        self._check_open()
        if not parameter.trainable or parameter.kind not in self.kinds:
            return parameter.tensor
        if parameter.name in self._leaves:
            index, _ = self._leaves[parameter.name]
        else:
            index = len(self.nodes)
            self.nodes.append(_Node('leaf', (), None))
            self._leaves[parameter.name] = (index, parameter)
        return Tensor.wrap(parameter.data, tape=self, grad_id=index)

    def record(self, kind, inputs, array, backward_fn):
        """
        Records an operation whose result is array.

        backward_fn(grad, needs) must return one gradient array (or None) per input, where
        needs[i] tells whether input i is tracked on this tape.

        :rtype: Tensor
        :returns: the wrapped result, tracked if any input is tracked
        """
        self._check_open()
        input_ids = tuple(t.grad_id if t is not None and t.tape is self else None for t in inputs)
        if all(i is None for i in input_ids):
            return Tensor.wrap(array)
        index = len(self.nodes)
        self.nodes.append(_Node(kind, input_ids, backward_fn))
        return Tensor.wrap(array, tape=self, grad_id=index)

    def backward(self, loss, parameters=None):
        """
        Runs reverse-mode differentiation from a scalar loss.

        :type loss: Tensor
        :param loss: scalar tensor recorded on this tape

        :type parameters: [Parameter]
        :param parameters: parameters whose gradients must appear in the result even if the loss does
                           not reach them (they get zeros); watched parameters always appear

        :raise: TapeConsumedException if called twice

        :rtype: dict
        :returns: parameter name -> gradient Tensor
        """
        self._check_open()
        if loss.data.size != 1:
            raise ShapeMismatchException('backward', (), loss.shape, "loss must be a scalar")

        grads = [None] * len(self.nodes)
        if loss.tape is self and loss.grad_id is not None:
            grads[loss.grad_id] = np.ones(loss.shape, dtype=loss.dtype)
            for index in range(loss.grad_id, -1, -1):
                node = self.nodes[index]
                grad = grads[index]
                if grad is None or node.backward_fn is None:
                    continue
                needs = tuple(i is not None for i in node.inputs)
                for input_id, input_grad in zip(node.inputs, node.backward_fn(grad, needs)):
                    if input_id is None or input_grad is None:
                        continue
                    grads[input_id] = input_grad if grads[input_id] is None else grads[input_id] + input_grad
                grads[index] = None

        self._consumed = True
        self.nodes = []

        result = {}
        for name, (index, parameter) in sorted(self._leaves.items()):
            grad = grads[index]
            result[name] = Tensor.wrap(np.zeros(parameter.shape, dtype=parameter.data.dtype) if grad is None
                                       else grad.astype(parameter.data.dtype, copy=False))
        for parameter in parameters or ():
            if parameter.trainable and parameter.name not in result:
                result[parameter.name] = Tensor.wrap(np.zeros(parameter.shape, dtype=parameter.data.dtype))
        return result
