#!/usr/bin/env node
/**
 * Command-line entry points.
 *
 *   lvme-bridge extract --videos 'clips/*.y4m' --encoder lumastat-v1 --segment-len 5 --out corpus/
 *   lvme-bridge embed-captions --texts captions.txt --encoder lumastat-v1 --out bank.jsonl
 *
 * Exit codes: 0 success, 1 operational failure (nothing extracted,
 * unreadable input, bad encoder), 2 usage error.
 */

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { runEmbedCaptions } from './captions';
import { listEncoders } from './encoders';
import { runExtract } from './extract';
import { log } from './log';

async function main(): Promise<number> {
  let exitCode = 0;
  await yargs(hideBin(process.argv))
    .scriptName('lvme-bridge')
    .usage('$0 <command>')
    .command(
      'extract',
      'segment videos and write an embedding corpus',
      (y) =>
        y
          .option('videos', { type: 'string', demandOption: true, describe: 'glob of input .y4m files' })
          .option('encoder', {
            type: 'string',
            demandOption: true,
            describe: `encoder family (${listEncoders().join(', ')})`,
          })
          .option('segment-len', { type: 'number', default: 5, describe: 'segment length in seconds' })
          .option('out', { type: 'string', demandOption: true, describe: 'output corpus directory' })
          .option('jobs', { type: 'number', describe: 'parallel video decodes' }),
      async (argv) => {
        try {
          const result = await runExtract({
            videosGlob: argv.videos,
            encoderId: argv.encoder,
            segmentLenS: argv['segment-len'],
            outDir: argv.out,
            jobs: argv.jobs,
          });
          process.stdout.write(`${result.manifestPath}\n`);
        } catch (err) {
          log.error(err instanceof Error ? err.message : String(err));
          exitCode = 1;
        }
      },
    )
    .command(
      'embed-captions',
      'embed caption texts into a caption bank',
      (y) =>
        y
          .option('texts', { type: 'string', demandOption: true, describe: 'file with one caption per line' })
          .option('encoder', {
            type: 'string',
            demandOption: true,
            describe: `encoder family (${listEncoders().join(', ')})`,
          })
          .option('out', { type: 'string', demandOption: true, describe: 'output .jsonl path' }),
      (argv) => {
        try {
          runEmbedCaptions(argv.texts, argv.encoder, argv.out);
          process.stdout.write(`${argv.out}\n`);
        } catch (err) {
          log.error(err instanceof Error ? err.message : String(err));
          exitCode = 1;
        }
      },
    )
    .demandCommand(1, 'specify a command')
    .strict()
    .fail((msg, err) => {
      if (err) throw err;
      log.error(msg);
      process.exit(2);
    })
    .parseAsync();
  return exitCode;
}

main().then((code) => {
  process.exitCode = code;
});
