/**
 * Entry point.
 *
 *   node dist/src/main.js                      # serve stdio (exec: transport)
 *   node dist/src/main.js --tcp 7311           # serve TCP on 127.0.0.1:7311
 *   node dist/src/main.js --tcp 7311 --host 0.0.0.0
 *
 * Options: --model NAME (default blob-v1), --max-image-bytes N (default
 * 16 MiB).  The model is instantiated before serving starts, so a bad
 * model name fails fast with exit code 2.
 */

import { createModel } from "./model.js";
import { ServerConfig, serveStdio, serveTcp } from "./server.js";

interface CliOptions {
  tcp?: number;
  host: string;
  model: string;
  maxImageBytes: number;
}

function parseArgs(argv: string[]): CliOptions {
  const opts: CliOptions = {
    host: "127.0.0.1",
    model: "blob-v1",
    maxImageBytes: 16 * 1024 * 1024,
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const value = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`${arg} needs a value`);
      return v;
    };
    switch (arg) {
      case "--tcp": {
        const port = Number(value());
        if (!Number.isInteger(port) || port < 0 || port > 65535) {
          throw new Error(`invalid port ${argv[i]}`);
        }
        opts.tcp = port;
        break;
      }
      case "--host":
        opts.host = value();
        break;
      case "--model":
        opts.model = value();
        break;
      case "--max-image-bytes": {
        const n = Number(value());
        if (!Number.isInteger(n) || n < 1) {
          throw new Error(`invalid --max-image-bytes ${argv[i]}`);
        }
        opts.maxImageBytes = n;
        break;
      }
      default:
        throw new Error(`unknown argument ${arg}`);
    }
  }
  return opts;
}

async function main(): Promise<void> {
  let opts: CliOptions;
  let cfg: ServerConfig;
  try {
    opts = parseArgs(process.argv.slice(2));
    cfg = { model: createModel(opts.model), maxImageBytes: opts.maxImageBytes };
  } catch (exc) {
    process.stderr.write(`${exc instanceof Error ? exc.message : exc}\n`);
    process.exit(2);
  }
  if (opts.tcp !== undefined) {
    const server = serveTcp(cfg, opts.tcp, opts.host);
    server.on("listening", () => {
      const addr = server.address();
      const port = typeof addr === "object" && addr ? addr.port : opts.tcp;
      process.stderr.write(`listening on tcp:${opts.host}:${port}\n`);
    });
    server.on("error", (exc) => {
      process.stderr.write(`${exc.message}\n`);
      process.exit(1);
    });
  } else {
    await serveStdio(cfg);
  }
}

main();
