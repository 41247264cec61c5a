import logging

from django.core.management.base import BaseCommand, CommandError

from Trajectories.config import TASKS, list_presets, load_config, preset, with_overrides
from Trajectories.errors import BohmError, ConfigError
from Trajectories.exports import to_json
from Trajectories.utils import run


class Command(BaseCommand):
    help = 'Bohmian trajectory tasks: ' + ', '.join(TASKS) + '. Exit status 2 on config errors, 3 on numerical failures.'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='task', required=True)
        for task in TASKS:
            sub = subparsers.add_parser(task, help=f'run the {task} task')
            source = sub.add_mutually_exclusive_group(required=True)
            source.add_argument('--config', help='path to a run configuration (TOML)')
            source.add_argument('--preset', help='shipped preset: ' + ', '.join(list_presets()))
            sub.add_argument('--out', help='output directory (default BOHM_OUT_DIR/<preset or task>)')
            sub.add_argument('--dt', type=float, help='sample spacing and nodal step')
            sub.add_argument('--threads', type=int, help='worker threads for batch integration')

    def handle(self, *args, **options):
        task = options['task']
        try:
            cfg = preset(options['preset']) if options.get('preset') else load_config(options['config'])
            cfg = with_overrides(cfg, out=options.get('out'), dt=options.get('dt'), threads=options.get('threads'),
                                 task=task)
            result = run(cfg)
        except BohmError as e:
            kind = 'configuration error' if isinstance(e, ConfigError) else 'numerical failure'
            logging.error(f'bohm {task}: {kind}: {e}')
            raise CommandError(f'{task}: {e}', returncode=e.exit_code)

        if task == 'classify':
            self.stdout.write(to_json(result.result))
        else:
            self.stdout.write(f'{task}: {len(result.artifacts)} artifacts written to {result.out_dir} '
                              f'in {result.duration:.2f}s')
