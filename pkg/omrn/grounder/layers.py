import math

import torch
import torch.nn as nn


def weight(*shape):
    """Uninitialised parameter; values are set by `xavier_init`."""
    return nn.Parameter(torch.empty(*shape))


def bias(size):
    return nn.Parameter(torch.zeros(size))


def is_bias(name):
    return name.rsplit('.', 1)[-1].startswith('b_')


def xavier_init(parameter, generator, scale=1.0):
    """
    Uniform Glorot initialisation, bound sqrt(6 / (fan_in + fan_out)) * scale.
    A row vector of size a counts as a [1 x a] matrix.
    """
    if parameter.dim() == 1:
        fan_in, fan_out = parameter.shape[0], 1
    else:
        fan_out, fan_in = parameter.shape[0], parameter.shape[1]
    bound = scale * math.sqrt(6. / (fan_in + fan_out))
    with torch.no_grad():
        values = torch.empty(parameter.shape, dtype=torch.float64).uniform_(-bound, bound, generator=generator)
        parameter.copy_(values)


class GRUCell(nn.Module):
    """
    Standard GRU cell with one bias per gate.

        z = sigmoid(W_z x + U_z h + b_z)
        r = sigmoid(W_r x + U_r h + b_r)
        h~ = tanh(W_h x + b_h + r * (U_h h))
        h' = (1 - z) * h + z * h~
    """

    def __init__(self, input_size, hidden_size):
        super(GRUCell, self).__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size

        self.W_z = weight(hidden_size, input_size)
        self.U_z = weight(hidden_size, hidden_size)
        self.b_z = bias(hidden_size)
        self.W_r = weight(hidden_size, input_size)
        self.U_r = weight(hidden_size, hidden_size)
        self.b_r = bias(hidden_size)
        self.W_h = weight(hidden_size, input_size)
        self.U_h = weight(hidden_size, hidden_size)
        self.b_h = bias(hidden_size)

    def input_terms(self, inputs):
        """Input projections of every step at once, each [L x hidden]."""
        return (inputs @ self.W_z.t() + self.b_z,
                inputs @ self.W_r.t() + self.b_r,
                inputs @ self.W_h.t() + self.b_h)

    def step(self, x_z, x_r, x_h, h_prev):
        z = torch.sigmoid(x_z + h_prev @ self.U_z.t())
        r = torch.sigmoid(x_r + h_prev @ self.U_r.t())
        h_tilde = torch.tanh(x_h + r * (h_prev @ self.U_h.t()))
        return (1 - z) * h_prev + z * h_tilde

    def forward(self, x, h_prev):
        """Forward pass of the GRU computation for one time step.

        Arguments
            x: input_size
            h_prev: hidden_size

        Returns:
            h_new: hidden_size
        """
        x_z, x_r, x_h = self.input_terms(x)
        return self.step(x_z, x_r, x_h, h_prev)

    def run(self, inputs, reverse=False):
        """Runs the cell over a [L x input_size] sequence from a zero state."""
        x_z, x_r, x_h = self.input_terms(inputs)
        h = inputs.new_zeros(self.hidden_size)
        order = range(inputs.shape[0] - 1, -1, -1) if reverse else range(inputs.shape[0])
        states = [None] * inputs.shape[0]
        for i in order:
            h = self.step(x_z[i], x_r[i], x_h[i], h)
            states[i] = h
        return torch.stack(states)


class BiGRU(nn.Module):
    """Bidirectional GRU; output step i is [forward state i; backward state i]."""

    def __init__(self, input_size, hidden_size):
        super(BiGRU, self).__init__()
        self.fwd = GRUCell(input_size, hidden_size)
        self.bwd = GRUCell(input_size, hidden_size)

    def forward(self, inputs):
        return torch.cat([self.fwd.run(inputs), self.bwd.run(inputs, reverse=True)], dim=-1)
