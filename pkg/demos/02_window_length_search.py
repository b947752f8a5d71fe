# coding: utf-8

# # Picking the window length
#
# The search walks the window length up or down while validation loss keeps
# improving and halves its step on a plateau. Every length is trained once.

# In[1]:

from hybridcast.convlstm import TrainConfig
from hybridcast.seqlen import SearchConfig, search_optimal_length, validation_evaluator
from hybridcast.synth import SynthConfig, generate


# First a toy curve with a known peak at 20, to see the moves.

# In[2]:

best, trace = search_optimal_length(lambda L: -(L - 20) ** 2, SearchConfig(eta=1e-6))
print(trace.to_csv())
print("best:", best, "evaluations:", trace.n_evaluations)


# Now a real objective: negative validation Huber loss of a small Conv-LSTM
# trained on synthetic closes. This takes a few seconds per length.

# In[3]:

data = generate(SynthConfig(days=300, seed=4))
features = data.series.features(("close",))
evaluate = validation_evaluator(features, 0, config=TrainConfig(epochs=8, learning_rate=3e-3),
                                columns=("close",))

cfg = SearchConfig(initial_length=4, initial_step=8, max_length=32, eta=1e-4)
best, trace = search_optimal_length(evaluate, cfg)
for e in trace.entries:
    print(f"{e.iteration:2d}  L={e.length:2d}  score={e.performance:+.5f}  step={e.step:g}  {e.action}")
print("chosen window length:", best)
