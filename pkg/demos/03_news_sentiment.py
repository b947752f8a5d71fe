# coding: utf-8

# # From headlines to a daily sentiment score
#
# Articles are cleaned, scored by the bundled finance lexicon and averaged per
# day, weighting each source by its reputation.

# In[1]:

import numpy as np

from hybridcast.news import default_registry, parse_feed, prepare_text
from hybridcast.sentiment import LexiconScorer, bucket_by_interval, score_articles, weighted_cumulative
from hybridcast.synth import SynthConfig, generate


# In[2]:

data = generate(SynthConfig(days=60, seed=11))
feed = parse_feed(data.feed_json)
print(len(feed.articles), "articles,", feed.skipped, "skipped")
print(prepare_text(feed.articles[0]))


# A single text: three positive hits and no negative ones give full confidence.

# In[3]:

scorer = LexiconScorer.default()
text = "Record profit as demand stays strong"
print(scorer.hits(text), scorer.score(text))


# The weighted mean for two articles, weights 2 and 1, scores 0.9 and -0.3:

# In[4]:

print(weighted_cumulative([(2.0, 0.9), (1.0, -0.3)]))


# Per-day scores line up with the generator's own event log.

# In[5]:

registry = default_registry()
days = bucket_by_interval(score_articles(feed.articles, registry), "day")
by_day = {np.datetime64(iv.start.date(), "D"): iv for iv in days}
for event in data.events:
    iv = by_day[event.date]
    print(f"{event.date}  event {event.direction:+d}  W_cs {iv.w_cs:+.3f}  ({iv.article_count} articles)")
