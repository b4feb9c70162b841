/** Replay a request log exported from the sketchpad against a live
    service and report any response drift.

    usage: node dist/replay-cli.js <request-log.json> [base-url]

    Exit 0 when every response matches the log, 1 on any mismatch,
    2 on usage or I/O problems. */

import { readFileSync } from "node:fs";
import process from "node:process";

import { RequestLog, replay } from "./requestlog.js";

async function main(): Promise<number> {
  const [path, baseUrl = "http://127.0.0.1:8080"] = process.argv.slice(2);
  if (!path) {
    console.error("usage: replay-cli <request-log.json> [base-url]");
    return 2;
  }
  const entries = RequestLog.parse(readFileSync(path, "utf-8"));
  const report = await replay(entries, baseUrl);
  for (const miss of report.mismatches) {
    console.error(`mismatch seq=${miss.seq} ${miss.path}`);
    console.error(`  logged: ${JSON.stringify(miss.logged)}`);
    console.error(`  live:   ${JSON.stringify(miss.live)}`);
  }
  console.log(`${report.replayed} replayed, ${report.mismatches.length} mismatches`);
  return report.mismatches.length === 0 ? 0 : 1;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err));
    process.exit(2);
  },
);
