"""Reverse-mode gradient tape.

Forward code records one entry per primitive op, in execution order. The
backward pass walks the records once, last to first, accumulating gradients
in a dict keyed by node reference. Because every consumer of a value is
recorded after its producer, reverse order guarantees a node's gradient is
complete before its own record fires; branching graphs (two branches joined
by a concat) need no special handling beyond that.

Activation refs are ints handed out by the tape; parameter refs are their
string names in a ParamSet. An in_ref of None marks an input that takes no
gradient (e.g. integer labels).
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Node:
    """A tensor tracked on the tape; ref keys its gradient slot."""
    ref: int
    value: np.ndarray


def untracked(value):
    """Wrap an array for tape-free (inference) execution."""
    return Node(-1, value)


class GradientTape:
    def __init__(self):
        self._records = []
        self._n_refs = 0

    def __len__(self):
        return len(self._records)

    def node(self, value):
        ref = self._n_refs
        self._n_refs += 1
        return Node(ref, value)

    def record(self, out_ref, in_refs, backward_fn):
        """backward_fn(grad_out) must return a tuple aligned with in_refs."""
        self._records.append((out_ref, in_refs, backward_fn))

    def backward(self, loss_node, params=None, seed=1.0, wrt=()):
        """Propagate d(loss)/d(everything) back through the recorded ops.

        Returns {param_name: grad}. With a ParamSet given, every trainable
        parameter gets an entry, zeros if the loss never touched it. Pass
        leaf nodes in `wrt` to additionally get their gradients back as a
        second return value (None where no gradient flowed).
        """
        if not self._records:
            raise RuntimeError("backward before any recorded forward op")
        grads = {loss_node.ref: np.asarray(seed, dtype=loss_node.value.dtype)}
        param_grads = {}
        for out_ref, in_refs, backward_fn in reversed(self._records):
            grad_out = grads.pop(out_ref, None)
            if grad_out is None:
                continue
            in_grads = backward_fn(grad_out)
            for ref, g in zip(in_refs, in_grads):
                if ref is None or g is None:
                    continue
                if isinstance(ref, str):
                    prev = param_grads.get(ref)
                    param_grads[ref] = g if prev is None else prev + g
                else:
                    prev = grads.get(ref)
                    grads[ref] = g if prev is None else prev + g
        if params is not None:
            for name in params.trainable:
                if name not in param_grads:
                    param_grads[name] = np.zeros_like(params.values[name])
        if wrt:
            # leaf refs are never produced by a record, so they survive here
            return param_grads, [grads.get(node.ref) for node in wrt]
        return param_grads


def concat(nodes, tape=None):
    """Join branch feature nodes along the last axis; backward splits."""
    values = [n.value for n in nodes]
    out_value = np.concatenate(values, axis=-1)
    if tape is None:
        return untracked(out_value)
    out = tape.node(out_value)
    split_points = np.cumsum([v.shape[-1] for v in values])[:-1]

    def backward_fn(grad_out):
        return tuple(np.split(grad_out, split_points, axis=-1))

    tape.record(out.ref, tuple(n.ref for n in nodes), backward_fn)
    return out
