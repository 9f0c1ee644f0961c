/** Chat-completions server for a trained model.
 *
 * Greedy decoding only; temperature in the request is accepted and
 * ignored. POST /v1/chat/completions answers n identical choices,
 * GET /health reports liveness, POST /shutdown stops the process so
 * test runs and finished pipelines can reap their students.
 */

import * as fs from "node:fs";
import * as http from "node:http";

import { greedyDecode } from "./model.js";
import { decodeIds, encodeText } from "./tokenizer.js";
import { ModelBundle, loadModel } from "./train.js";

const BODY_LIMIT = 1 << 20;

interface ChatMessage {
  role: string;
  content: string;
}

function lastUserContent(body: unknown): string | null {
  const messages = (body as { messages?: unknown }).messages;
  if (!Array.isArray(messages) || messages.length === 0) return null;
  let found: string | null = null;
  for (const m of messages) {
    const msg = m as ChatMessage;
    if (typeof msg !== "object" || msg === null) return null;
    if (typeof msg.role !== "string" || typeof msg.content !== "string") return null;
    if (msg.role === "user") found = msg.content;
  }
  return found;
}

function sendJson(res: http.ServerResponse, status: number, doc: unknown): void {
  const payload = JSON.stringify(doc);
  res.writeHead(status, { "content-type": "application/json" });
  res.end(payload);
}

function badRequest(res: http.ServerResponse, message: string): void {
  sendJson(res, 400, { error: { message, type: "invalid_request_error" } });
}

export function completionFor(bundle: ModelBundle, prompt: string): { text: string; promptTokens: number; completionTokens: number } {
  const inputIds = encodeText(bundle.tokenizer, prompt);
  const outIds = greedyDecode(bundle.params, inputIds, bundle.maxDecodeLen);
  return {
    text: decodeIds(bundle.tokenizer, outIds),
    promptTokens: inputIds.length,
    completionTokens: outIds.length,
  };
}

export function createAdapterServer(bundle: ModelBundle, modelName: string): http.Server {
  const server = http.createServer((req, res) => {
    if (req.method === "GET" && req.url === "/health") {
      sendJson(res, 200, { status: "ok", model: modelName });
      return;
    }
    if (req.method === "POST" && req.url === "/shutdown") {
      sendJson(res, 200, { stopping: true });
      // let the response flush before tearing the listener down
      setImmediate(() => {
        server.close();
        server.emit("adapter-shutdown");
      });
      return;
    }
    if (req.method !== "POST" || req.url !== "/v1/chat/completions") {
      sendJson(res, 404, { error: { message: "not found" } });
      return;
    }

    let size = 0;
    const chunks: Buffer[] = [];
    req.on("data", (chunk: Buffer) => {
      size += chunk.length;
      if (size > BODY_LIMIT) {
        badRequest(res, "body too large");
        req.destroy();
        return;
      }
      chunks.push(chunk);
    });
    req.on("end", () => {
      if (res.writableEnded) return;
      let body: unknown;
      try {
        body = JSON.parse(Buffer.concat(chunks).toString("utf-8"));
      } catch {
        badRequest(res, "body is not valid JSON");
        return;
      }
      if (typeof body !== "object" || body === null) {
        badRequest(res, "body must be a JSON object");
        return;
      }
      const prompt = lastUserContent(body);
      if (prompt === null) {
        badRequest(res, "messages must be a non-empty list of {role, content} with a user turn");
        return;
      }
      const rawN = (body as { n?: unknown }).n ?? 1;
      if (!Number.isInteger(rawN) || (rawN as number) < 1) {
        badRequest(res, "n must be a positive integer");
        return;
      }
      const n = rawN as number;
      const done = completionFor(bundle, prompt);
      sendJson(res, 200, {
        id: `cmpl-${Date.now().toString(36)}`,
        object: "chat.completion",
        created: Math.floor(Date.now() / 1000),
        model: (body as { model?: string }).model ?? modelName,
        choices: Array.from({ length: n }, (_, index) => ({
          index,
          message: { role: "assistant", content: done.text },
          finish_reason: "stop",
        })),
        usage: {
          prompt_tokens: done.promptTokens,
          completion_tokens: done.completionTokens * n,
          total_tokens: done.promptTokens + done.completionTokens * n,
        },
      });
    });
  });
  return server;
}

function parseServeArgs(argv: string[]): { model: string; port: number; portFile: string } {
  let model = "";
  let port = 0;
  let portFile = "";
  for (let i = 0; i < argv.length; i++) {
    const value = argv[i + 1];
    switch (argv[i]) {
      case "--model": model = value; i++; break;
      case "--port": port = Number(value); i++; break;
      case "--port-file": portFile = value; i++; break;
      default: throw new Error(`unknown flag ${argv[i]}`);
    }
  }
  if (!model) throw new Error("--model is required");
  return { model, port, portFile };
}

function serveMain(argv: string[]): void {
  const args = parseServeArgs(argv);
  if (!fs.existsSync(args.model)) {
    process.stderr.write(`model weights not found: ${args.model}\n`);
    process.exit(2);
  }
  const bundle = loadModel(args.model);
  const server = createAdapterServer(bundle, "fdd-student");
  server.on("error", (err) => {
    process.stderr.write(`server error: ${err.message}\n`);
    process.exit(1);
  });
  server.on("adapter-shutdown", () => process.exit(0));
  server.listen(args.port, "127.0.0.1", () => {
    const addr = server.address();
    const port = typeof addr === "object" && addr !== null ? addr.port : args.port;
    if (args.portFile) fs.writeFileSync(args.portFile, String(port) + "\n");
  });
}

if (require.main === module) {
  serveMain(process.argv.slice(2));
}
