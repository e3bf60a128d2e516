from __future__ import absolute_import

from .result import EvalResult, format_table, save_result
from .perplexity import perplexity, chunk_nll
from .latency import latency_bench, latency_pair, speedup, bench_prompt
