import sys
import os.path as osp
import time
import argparse
import warnings

from default_config import (
    get_default_config, model_kwargs, train_kwargs, calibration_kwargs, prune_kwargs,
    ppl_kwargs, bench_kwargs, coherence_kwargs
)
import ampprune
from ampprune.exceptions import (
    CheckpointError, InfeasibleRatioError, CalibrationError, DivergenceError,
    BaselineNotBeatenError, NumericError
)
from ampprune.utils import (
    Logger, read_json, write_json, set_random_seed, set_num_threads, collect_env_info,
    save_checkpoint, load_checkpoint, fingerprint, compute_model_complexity
)

COMMANDS = ('train', 'score', 'prune', 'recover', 'ppl', 'bench', 'coherence')

EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INFEASIBLE = 4
EXIT_CHECKPOINT = 5
EXIT_CALIBRATION = 6
EXIT_DIVERGENCE = 7
EXIT_BASELINE = 8
EXIT_INVALID = 9

# checked in order: subclasses before their bases
ERROR_KINDS = [
    (FileNotFoundError, 'missing_file', EXIT_MISSING_FILE),
    (InfeasibleRatioError, 'infeasible_ratio', EXIT_INFEASIBLE),
    (CheckpointError, 'checkpoint', EXIT_CHECKPOINT),
    (CalibrationError, 'calibration', EXIT_CALIBRATION),
    (DivergenceError, 'divergence', EXIT_DIVERGENCE),
    (BaselineNotBeatenError, 'baseline', EXIT_BASELINE),
    (NumericError, 'numeric', EXIT_INVALID),
    (ValueError, 'invalid', EXIT_INVALID),
    (KeyError, 'invalid', EXIT_INVALID),
    (TypeError, 'invalid', EXIT_INVALID),
]


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """Raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config-file', type=str, default='', help='path to yacs config file')
    common.add_argument('--save-dir', type=str, default=None, help='log directory')
    common.add_argument('opts', default=None, nargs=argparse.REMAINDER,
                        help='Modify config options using the command-line')

    parser = ArgumentParser(prog='main.py', formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest='command')

    p = sub.add_parser('train', parents=[common], help='train a model from scratch')
    p.add_argument('--config', type=str, help='model config JSON (preset and/or ModelConfig fields)')
    p.add_argument('--preset', type=str, help='model preset')
    p.add_argument('--corpus', type=str, required=True)
    p.add_argument('--steps', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--batch-tokens', type=int)
    p.add_argument('--seq-len', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('score', parents=[common], help='compute head and MLP importance')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--calib', type=str, required=True)
    p.add_argument('--samples', type=int)
    p.add_argument('--max-len', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--workers', type=int)
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('prune', parents=[common], help='prune a model from an importance report')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--report', type=str, required=True)
    p.add_argument('--ratio', type=float)
    p.add_argument('--basis', type=str, choices=['per-layer', 'per_layer', 'overall'])
    p.add_argument('--mode', type=str, choices=['amp', 'random', 'reversed'])
    p.add_argument('--seed', type=int)
    p.add_argument('--mlp-ratio', type=float)
    p.add_argument('--out', type=str, required=True)
    p.add_argument('--plan', type=str, help='where to write the pruning plan JSON')

    p = sub.add_parser('recover', parents=[common], help='fine-tune a pruned model')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--corpus', type=str, required=True)
    p.add_argument('--steps', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--batch-tokens', type=int)
    p.add_argument('--seq-len', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--out', type=str, required=True)

    p = sub.add_parser('ppl', parents=[common], help='perplexity on a corpus')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--corpus', type=str, required=True)
    p.add_argument('--chunk', type=int)
    p.add_argument('--workers', type=int)
    p.add_argument('--out', type=str)

    p = sub.add_parser('bench', parents=[common], help='greedy decoding latency')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--prompt-len', type=int)
    p.add_argument('--gen-len', type=int)
    p.add_argument('--runs', type=int)
    p.add_argument('--warmup', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--against', type=str, help='pruned checkpoint measured in the same session')
    p.add_argument('--out', type=str)

    p = sub.add_parser('coherence', parents=[common], help='amp vs random vs reversed pruning')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--calib', type=str, required=True)
    p.add_argument('--corpus', type=str, required=True)
    p.add_argument('--ratio', type=float)
    p.add_argument('--seeds', type=str, help='comma-separated random seeds')
    p.add_argument('--samples', type=int)
    p.add_argument('--max-len', type=int)
    p.add_argument('--chunk', type=int)
    p.add_argument('--basis', type=str, choices=['per-layer', 'per_layer', 'overall'])
    p.add_argument('--workers', type=int)
    p.add_argument('--out', type=str)
    return parser


def _set(node, key, value):
    if value is not None:
        node[key] = value


def reset_config(cfg, args):
    command = args.command
    if args.save_dir is not None:
        cfg.data.save_dir = args.save_dir
    if getattr(args, 'corpus', None):
        cfg.data.corpus = args.corpus
    if getattr(args, 'calib', None):
        cfg.data.calib = args.calib

    if command in ('train', 'recover'):
        if command == 'train':
            if args.config:
                for key, value in read_json(args.config).items():
                    if key not in cfg.model:
                        raise KeyError('Unknown model config key: {}'.format(key))
                    cfg.model[key] = value
            _set(cfg.model, 'preset', args.preset)
        _set(cfg.train, 'steps', args.steps)
        _set(cfg.train, 'seed', args.seed)
        _set(cfg.train, 'batch_tokens', args.batch_tokens)
        _set(cfg.train, 'seq_len', args.seq_len)
        _set(cfg.train, 'lr', args.lr)
    elif command in ('score', 'coherence'):
        _set(cfg.score, 'samples', args.samples)
        _set(cfg.score, 'max_len', args.max_len)
        _set(cfg.score, 'workers', args.workers)
        if command == 'score':
            _set(cfg.score, 'seed', args.seed)
        else:
            _set(cfg.coherence, 'ratio', args.ratio)
            _set(cfg.eval, 'chunk', args.chunk)
            if args.basis is not None:
                cfg.coherence.basis = args.basis.replace('-', '_')
            if args.seeds is not None:
                try:
                    cfg.coherence.seeds = [int(s) for s in args.seeds.split(',') if s.strip()]
                except ValueError:
                    raise UsageError('--seeds must be comma-separated integers, got "{}"'.format(
                        args.seeds))
    elif command == 'prune':
        _set(cfg.prune, 'ratio', args.ratio)
        _set(cfg.prune, 'mode', args.mode)
        _set(cfg.prune, 'seed', args.seed)
        _set(cfg.prune, 'mlp_ratio', args.mlp_ratio)
        if args.basis is not None:
            cfg.prune.basis = args.basis.replace('-', '_')
    elif command == 'ppl':
        _set(cfg.eval, 'chunk', args.chunk)
        _set(cfg.eval, 'workers', args.workers)
    elif command == 'bench':
        _set(cfg.eval, 'prompt_len', args.prompt_len)
        _set(cfg.eval, 'gen_len', args.gen_len)
        _set(cfg.eval, 'runs', args.runs)
        _set(cfg.eval, 'warmup', args.warmup)
        _set(cfg.eval, 'seed', args.seed)


def build_cfg(args):
    cfg = get_default_config()
    try:
        if args.config_file:
            require_file(args.config_file)
            cfg.merge_from_file(args.config_file)
        reset_config(cfg, args)
        cfg.merge_from_list(args.opts or [])
    except (KeyError, ValueError, AssertionError) as e:
        raise UsageError(str(e).strip('"\''))
    cfg.freeze()
    return cfg


def require_file(fpath):
    if not osp.isfile(fpath):
        raise FileNotFoundError('No file found at "{}"'.format(fpath))
    return fpath


def load_model(fpath):
    w = load_checkpoint(require_file(fpath))
    num_params, macs = compute_model_complexity(w)
    print('=> Loaded "{}": params={:,} MACs/token={:,} layer dims={}'.format(
        fpath, num_params, macs, w.layer_dims()))
    return w


def write_provenance(command, out, input_fingerprint, output_fingerprint, cfg, curve):
    curve.save(out + '.loss.csv')
    write_json({
        'command': command,
        'input_fingerprint': input_fingerprint,
        'output_fingerprint': output_fingerprint,
        'train_config': ampprune.engine.TrainConfig(**train_kwargs(cfg)).to_dict(),
        'final_loss': curve.losses[-1] if curve.losses else None,
    }, out + '.json')


def cmd_train(cfg, args):
    config = ampprune.models.build_config(cfg.model.preset, **model_kwargs(cfg))
    print('Building model: {} {}'.format(cfg.model.preset, config))
    w = ampprune.engine.init_weights(config, seed=cfg.train.seed)
    num_params, macs = compute_model_complexity(w)
    print('Model complexity: params={:,} MACs/token={:,}'.format(num_params, macs))
    corpus = ampprune.data.load_corpus(require_file(cfg.data.corpus))
    tcfg = ampprune.engine.TrainConfig(**train_kwargs(cfg))
    trained, curve = ampprune.engine.train(w, corpus, tcfg, save_dir=cfg.data.save_dir or None)
    digest = save_checkpoint(trained, args.out)
    write_provenance('train', args.out, None, digest, cfg, curve)
    curve.show_summary()


def cmd_score(cfg, args):
    w = load_model(args.model)
    calib = ampprune.data.load_calibration(require_file(cfg.data.calib), **calibration_kwargs(cfg))
    print('=> Scoring {} calibration samples'.format(len(calib)))
    report = ampprune.pruning.compute_importance(w, calib, workers=cfg.score.workers, verbose=True)
    ampprune.pruning.save_report(report, args.out)


def cmd_prune(cfg, args):
    w = load_model(args.model)
    report = ampprune.pruning.load_report(require_file(args.report))
    digest = fingerprint(w)
    if report.model_fingerprint != digest:
        raise ValueError('report "{}" was computed for model {}, not {}'.format(
            args.report, report.model_fingerprint[:12], digest[:12]))
    report.check_dims(w.layer_dims())
    plan = ampprune.pruning.build_plan(report, config=w.config, **prune_kwargs(cfg))
    pruned = ampprune.pruning.apply_plan(w, plan)
    print('=> {}'.format(plan))
    print('=> achieved ratio {:.6f} overall, {:.6f} excluding embeddings'.format(
        plan.achieved_overall_ratio, plan.achieved_non_embedding_ratio))
    save_checkpoint(pruned, args.out)
    if args.plan:
        ampprune.pruning.save_plan(plan, args.plan)


def cmd_recover(cfg, args):
    w = load_model(args.model)
    corpus = ampprune.data.load_corpus(require_file(cfg.data.corpus))
    tcfg = ampprune.engine.TrainConfig(**train_kwargs(cfg))
    recovered, curve = ampprune.engine.recover(w, corpus, tcfg, save_dir=cfg.data.save_dir or None)
    digest = save_checkpoint(recovered, args.out)
    write_provenance('recover', args.out, fingerprint(w), digest, cfg, curve)
    curve.show_summary()


def _chunk_len(cfg, w):
    chunk = cfg.eval.chunk
    if chunk > w.config.max_seq_len:
        warnings.warn('chunk {} exceeds max_seq_len {}; using {}'.format(
            chunk, w.config.max_seq_len, w.config.max_seq_len))
        chunk = w.config.max_seq_len
    return chunk


def cmd_ppl(cfg, args):
    w = load_model(args.model)
    corpus = ampprune.data.load_corpus(require_file(cfg.data.corpus))
    kwargs = ppl_kwargs(cfg)
    kwargs['chunk_len'] = _chunk_len(cfg, w)
    result = ampprune.metrics.perplexity(w, corpus, model_fingerprint=fingerprint(w), **kwargs)
    print(ampprune.metrics.format_table([(args.model, 'ppl', result.value)]))
    if args.out:
        ampprune.metrics.save_result(result, args.out)


def cmd_bench(cfg, args):
    w = load_model(args.model)
    if not args.against:
        result = ampprune.metrics.latency_bench(w, model_fingerprint=fingerprint(w),
                                                **bench_kwargs(cfg))
        print(ampprune.metrics.format_table([(args.model, 'latency (s)', result.value)]))
        if args.out:
            ampprune.metrics.save_result(result, args.out)
        return
    pruned = load_model(args.against)
    dense_result, pruned_result = ampprune.metrics.latency_pair(
        w, pruned, fingerprints=(fingerprint(w), fingerprint(pruned)), **bench_kwargs(cfg))
    ratio = ampprune.metrics.speedup(dense_result, pruned_result)
    print(ampprune.metrics.format_table([
        (args.model, 'latency (s)', dense_result.value),
        (args.against, 'latency (s)', pruned_result.value),
        ('', 'speedup', ratio),
    ]))
    if args.out:
        write_json({'dense': dense_result.to_dict(), 'pruned': pruned_result.to_dict(),
                    'speedup': ratio}, args.out)


def cmd_coherence(cfg, args):
    w = load_model(args.model)
    calib = ampprune.data.load_calibration(require_file(cfg.data.calib), **calibration_kwargs(cfg))
    corpus = ampprune.data.load_corpus(require_file(cfg.data.corpus))
    kwargs = coherence_kwargs(cfg)
    kwargs['chunk_len'] = _chunk_len(cfg, w)
    report = ampprune.engine.coherence_check(w, calib, corpus, **kwargs)
    if args.out:
        write_json(report.to_dict(), args.out)


COMMAND_FUNCS = {
    'train': cmd_train,
    'score': cmd_score,
    'prune': cmd_prune,
    'recover': cmd_recover,
    'ppl': cmd_ppl,
    'bench': cmd_bench,
    'coherence': cmd_coherence,
}


def error_line(kind, e):
    if isinstance(e, KeyError) and e.args:
        e = e.args[0]
    return 'error: {}: {}'.format(kind, ' '.join(str(e).split()))


def run(argv=None):
    """Runs one command and returns its exit code.

    Failures print a single ``error: <kind>: <message>`` line on stderr.
    """
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError('a command is required: one of {}'.format(', '.join(COMMANDS)))
        cfg = build_cfg(args)
    except UsageError as e:
        print(error_line('usage', e), file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(error_line('missing_file', e), file=sys.stderr)
        return EXIT_MISSING_FILE

    stdout = sys.stdout
    try:
        if cfg.data.save_dir:
            log_name = args.command + '.log' + time.strftime('-%Y-%m-%d-%H-%M-%S')
            sys.stdout = Logger(osp.join(cfg.data.save_dir, log_name))
        num_threads = set_num_threads()
        set_random_seed(cfg.train.seed)
        print('Show configuration\n{}\n'.format(cfg))
        print('Threads: {}'.format(num_threads))
        if cfg.data.save_dir:
            print('Collecting env info ...')
            print('** System info **\n{}\n'.format(collect_env_info()))
        COMMAND_FUNCS[args.command](cfg, args)
    except Exception as e:
        for exc_type, kind, code in ERROR_KINDS:
            if isinstance(e, exc_type):
                print(error_line(kind, e), file=sys.stderr)
                return code
        print(error_line('internal', '{}: {}'.format(type(e).__name__, e)), file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        if sys.stdout is not stdout:
            sys.stdout.close()
            sys.stdout = stdout
    return 0


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
