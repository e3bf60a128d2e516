from yacs.config import CfgNode as CN


def get_default_config():
    cfg = CN()

    # model
    cfg.model = CN()
    cfg.model.preset = 'toy' # one of ampprune.models.show_avai_models()
    # fields left at None take the preset value
    cfg.model.vocab_size = None
    cfg.model.d_model = None
    cfg.model.n_layers = None
    cfg.model.n_heads = None
    cfg.model.d_head = None
    cfg.model.d_intermediate = None
    cfg.model.max_seq_len = None
    cfg.model.rms_norm_eps = None
    cfg.model.rope_theta = None

    # data
    cfg.data = CN()
    cfg.data.corpus = '' # training / evaluation text
    cfg.data.calib = '' # calibration text, one sample per line
    cfg.data.save_dir = '' # log and tensorboard directory; empty disables file logging

    # train
    cfg.train = CN()
    cfg.train.steps = 500
    cfg.train.batch_tokens = 1024 # input tokens per optimization step
    cfg.train.seq_len = 128 # window length
    cfg.train.lr = 0.0003
    cfg.train.optim = 'adam'
    cfg.train.weight_decay = 0.
    cfg.train.grad_clip = 1.0 # max global gradient norm
    cfg.train.label_smooth = 0. # label smoothing epsilon
    cfg.train.eval_every = 0 # held-in perplexity frequency (0 disables)
    cfg.train.print_freq = 10
    cfg.train.workers = 0 # data loading workers
    cfg.train.seed = 0 # weight init and sampler seed

    # optimizer
    cfg.adam = CN()
    cfg.adam.beta1 = 0.9 # exponential decay rate for first moment
    cfg.adam.beta2 = 0.999 # exponential decay rate for second moment
    cfg.adam.eps = 1e-8

    # importance scoring
    cfg.score = CN()
    cfg.score.samples = 50 # calibration samples
    cfg.score.max_len = 512 # tokens per calibration sample
    cfg.score.seed = 0 # calibration subsample seed
    cfg.score.workers = 1

    # pruning
    cfg.prune = CN()
    cfg.prune.ratio = 0.3
    cfg.prune.basis = 'per_layer' # per_layer or overall
    cfg.prune.mode = 'amp' # amp, random or reversed
    cfg.prune.seed = 0 # seed of the random mode
    cfg.prune.mlp_ratio = None # separate MLP fraction, per_layer basis only

    # evaluation
    cfg.eval = CN()
    cfg.eval.chunk = 512 # perplexity chunk length
    cfg.eval.workers = 1
    cfg.eval.prompt_len = 12
    cfg.eval.gen_len = 128
    cfg.eval.runs = 20
    cfg.eval.warmup = 10
    cfg.eval.seed = 0 # benchmark prompt seed

    # coherence check
    cfg.coherence = CN()
    cfg.coherence.ratio = 0.25
    cfg.coherence.basis = 'per_layer'
    cfg.coherence.seeds = [1, 2, 3]

    return cfg


def model_kwargs(cfg):
    """Model config fields set in ``cfg``; the preset supplies the rest."""
    fields = ('vocab_size', 'd_model', 'n_layers', 'n_heads', 'd_head', 'd_intermediate',
              'max_seq_len', 'rms_norm_eps', 'rope_theta')
    return {name: cfg.model[name] for name in fields if cfg.model[name] is not None}


def train_kwargs(cfg):
    return {
        'steps': cfg.train.steps,
        'batch_tokens': cfg.train.batch_tokens,
        'seq_len': cfg.train.seq_len,
        'learning_rate': cfg.train.lr,
        'optim': cfg.train.optim,
        'weight_decay': cfg.train.weight_decay,
        'grad_clip': cfg.train.grad_clip,
        'label_smooth': cfg.train.label_smooth,
        'eval_every': cfg.train.eval_every,
        'print_freq': cfg.train.print_freq,
        'workers': cfg.train.workers,
        'seed': cfg.train.seed,
        'adam_beta1': cfg.adam.beta1,
        'adam_beta2': cfg.adam.beta2,
        'adam_eps': cfg.adam.eps
    }


def calibration_kwargs(cfg):
    return {
        'max_samples': cfg.score.samples,
        'max_len': cfg.score.max_len,
        'seed': cfg.score.seed
    }


def prune_kwargs(cfg):
    return {
        'ratio': cfg.prune.ratio,
        'basis': cfg.prune.basis,
        'strategy': cfg.prune.mode,
        'seed': cfg.prune.seed if cfg.prune.mode == 'random' else None,
        'mlp_ratio': cfg.prune.mlp_ratio
    }


def ppl_kwargs(cfg):
    return {
        'chunk_len': cfg.eval.chunk,
        'workers': cfg.eval.workers
    }


def bench_kwargs(cfg):
    return {
        'prompt_len': cfg.eval.prompt_len,
        'gen_len': cfg.eval.gen_len,
        'runs': cfg.eval.runs,
        'warmup': cfg.eval.warmup,
        'seed': cfg.eval.seed
    }


def coherence_kwargs(cfg):
    return {
        'ratio': cfg.coherence.ratio,
        'seeds': list(cfg.coherence.seeds),
        'basis': cfg.coherence.basis,
        'chunk_len': cfg.eval.chunk,
        'workers': cfg.score.workers
    }
