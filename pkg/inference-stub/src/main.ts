// Entry point: load the manifest, bind, and announce the listening address.

import { createApp } from './app.js';
import { ManifestStore } from './manifest.js';

interface CliOptions {
  manifest: string;
  host: string;
  port: number;
  latencyMs: number;
}

function parseArgs(argv: string[]): CliOptions {
  const options: CliOptions = {
    manifest: '',
    host: '127.0.0.1',
    port: 8901,
    latencyMs: 0,
  };
  for (let i = 0; i < argv.length; i += 1) {
    const flag = argv[i];
    const value = argv[i + 1];
    switch (flag) {
      case '--manifest':
        options.manifest = value;
        i += 1;
        break;
      case '--host':
        options.host = value;
        i += 1;
        break;
      case '--port':
        options.port = Number(value);
        i += 1;
        break;
      case '--latency-ms':
        options.latencyMs = Number(value);
        i += 1;
        break;
      default:
        throw new Error(`unknown flag: ${flag}`);
    }
  }
  if (!options.manifest) {
    throw new Error('--manifest is required');
  }
  if (!Number.isInteger(options.port) || options.port < 0 || options.port > 65535) {
    throw new Error(`invalid --port: ${options.port}`);
  }
  if (!Number.isFinite(options.latencyMs) || options.latencyMs < 0) {
    throw new Error(`invalid --latency-ms: ${options.latencyMs}`);
  }
  return options;
}

function main(): void {
  let options: CliOptions;
  try {
    options = parseArgs(process.argv.slice(2));
  } catch (error) {
    console.error(String(error));
    console.error(
      'usage: main.js --manifest PATH [--host HOST] [--port PORT] [--latency-ms MS]',
    );
    process.exit(2);
  }
  const store = new ManifestStore(options.manifest);
  try {
    store.load();
  } catch (error) {
    console.error(`failed to load manifest: ${String(error)}`);
    process.exit(1);
  }
  const app = createApp({ store, latencyMs: options.latencyMs });
  const server = app.listen(options.port, options.host, () => {
    const address = server.address();
    const port = typeof address === 'object' && address ? address.port : options.port;
    console.log(`serving ${store.size} images, listening on http://${options.host}:${port}`);
  });
  const shutdown = () => server.close(() => process.exit(0));
  process.on('SIGTERM', shutdown);
  process.on('SIGINT', shutdown);
}

main();
