# coding: utf-8

# # The Conv-LSTM cell, one step at a time
#
# Each gate convolves the feature vector with its own small kernels, projects
# the feature maps to the hidden width and adds the usual recurrent term.
# This script steps the cell by hand, then checks the backward pass.

# In[1]:

import numpy as np

from hybridcast.convlstm import GATES, CellState, ConvLstmParams, cell_forward, forward, grad_check


# A tiny cell: 3 input features, 4 hidden units, 2 filters of width 3.

# In[2]:

params = ConvLstmParams.init(n_features=3, hidden=4, filters=2, kernel_width=3, rng=0)
for name, arr in params.arrays().items():
    print(f"{name:7s} {arr.shape}")
print("gate order:", GATES)


# With every weight at zero all three sigmoid gates sit at 0.5 and the
# candidate is 0, so the cell state simply halves.

# In[3]:

zero = ConvLstmParams.zeros(3, hidden=4, filters=2)
state = CellState(np.zeros(4), np.array([1.0, -2.0, 0.5, 4.0]))
print("c after one zero step:", cell_forward([0.1, 0.2, 0.3], state, zero).c)


# Run a short window through the random initialization. The
# hidden state never leaves (-1, 1).

# In[4]:

rng = np.random.default_rng(1)
window = rng.normal(size=(6, 3))
state = CellState.zeros(4)
for t, x in enumerate(window):
    state = cell_forward(x, state, params)
    print(t, np.round(state.h, 4))
print("readout:", forward(window, params))


# Gradients come from backpropagation through time. Central differences
# agree to well under 1e-4 for both losses.

# In[5]:

for loss, target in (("mse", 0.7), ("huber", 0.3), ("huber", 5.0)):
    err = grad_check(params, window, target, loss)
    print(f"{loss:5s} target={target:4.1f}  max relative error {err:.2e}")
