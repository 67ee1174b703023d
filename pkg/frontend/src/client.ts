/**
 * Session client: HTTP commands plus the event stream.
 *
 * The WebSocket delivers JSON envelopes; a frame envelope is immediately
 * followed by one binary PNG message, which is paired back to its envelope
 * here. Transport is injectable so tests can run without a network.
 */
import type { Command, ReportDoc, SessionState, StreamEnvelope } from "./protocol.js";

export interface SocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
  close(): void;
}

export interface ClientOptions {
  fetchImpl?: typeof fetch;
  socketFactory?: (url: string) => SocketLike;
  onFrame?: (frame: { epoch: number; bytes: Uint8Array }) => void;
  onReport?: (report: ReportDoc) => void;
  onStateChanged?: () => void;
  onWarning?: (message: string) => void;
  onError?: (message: string) => void;
  onReconnect?: () => void;
  reconnectDelayMs?: number;
}

export class SessionClient {
  readonly baseUrl: string;
  sessionId: string | null = null;
  private readonly opts: ClientOptions;
  private readonly fetchImpl: typeof fetch;
  private socket: SocketLike | null = null;
  private pendingEnvelope: StreamEnvelope | null = null;
  private closed = false;

  constructor(baseUrl: string, opts: ClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.opts = opts;
    this.fetchImpl = opts.fetchImpl ?? fetch.bind(globalThis);
  }

  async createSession(descriptor?: string): Promise<string> {
    const res = await this.fetchImpl(`${this.baseUrl}/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(descriptor ? { descriptor } : {}),
    });
    if (!res.ok) throw new Error(`session creation failed: ${res.status}`);
    const doc = (await res.json()) as { id: string };
    this.sessionId = doc.id;
    return doc.id;
  }

  private requireSession(): string {
    if (!this.sessionId) throw new Error("no session; call createSession first");
    return this.sessionId;
  }

  async command(cmd: Command): Promise<{ epoch: number; events: StreamEnvelope[] }> {
    const sid = this.requireSession();
    const res = await this.fetchImpl(`${this.baseUrl}/session/${sid}/command`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(cmd),
    });
    const doc = await res.json();
    if (!res.ok) {
      const message = doc?.error?.message ?? `command failed: ${res.status}`;
      this.opts.onError?.(message);
      throw new Error(message);
    }
    return doc as { epoch: number; events: StreamEnvelope[] };
  }

  async state(): Promise<SessionState> {
    const sid = this.requireSession();
    const res = await this.fetchImpl(`${this.baseUrl}/session/${sid}/state`);
    if (!res.ok) throw new Error(`state fetch failed: ${res.status}`);
    return (await res.json()) as SessionState;
  }

  frameUrl(): string {
    return `${this.baseUrl}/session/${this.requireSession()}/frame.png`;
  }

  connectStream(): void {
    if (!this.opts.socketFactory) throw new Error("no socket factory configured");
    const sid = this.requireSession();
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    const socket = this.opts.socketFactory(`${wsBase}/session/${sid}/stream`);
    this.socket = socket;
    socket.onopen = () => this.opts.onReconnect?.();
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onclose = () => {
      this.socket = null;
      if (this.closed) return;
      const delay = this.opts.reconnectDelayMs ?? 1000;
      setTimeout(() => {
        if (!this.closed) this.connectStream();
      }, delay);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  /** Route one socket message: JSON envelope or the binary payload it announced. */
  handleMessage(data: unknown): void {
    if (typeof data === "string") {
      const envelope = JSON.parse(data) as StreamEnvelope;
      if (envelope.binary) {
        this.pendingEnvelope = envelope;
        return;
      }
      this.dispatch(envelope, null);
      return;
    }
    const bytes =
      data instanceof Uint8Array
        ? data
        : data instanceof ArrayBuffer
          ? new Uint8Array(data)
          : null;
    if (bytes && this.pendingEnvelope) {
      const envelope = this.pendingEnvelope;
      this.pendingEnvelope = null;
      this.dispatch(envelope, bytes);
    }
  }

  private dispatch(envelope: StreamEnvelope, bytes: Uint8Array | null): void {
    switch (envelope.event) {
      case "frame":
        if (bytes) this.opts.onFrame?.({ epoch: envelope.epoch, bytes });
        break;
      case "report":
        if (envelope.payload) this.opts.onReport?.(envelope.payload);
        break;
      case "state":
        this.opts.onStateChanged?.();
        break;
      case "warning":
        this.opts.onWarning?.(envelope.message ?? "warning");
        break;
      case "error":
        this.opts.onError?.(envelope.message ?? "error");
        break;
    }
  }
}
