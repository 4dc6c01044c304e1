/**
 * Typed client for the stepper service JSON API.
 *
 * The console never computes ASM semantics: everything it shows comes from
 * these responses, and everything it does is one of the four calls below.
 * A rejected request (4xx with an `error` field) raises ServiceRejection so
 * the UI can surface the service's message verbatim; transport failures
 * propagate as ordinary errors.
 */

export interface RegistryEntry {
  query: string;
  locations: string[];
  status: "awaiting" | "delivered";
  value: string | null;
  step: number;
}

export interface SessionStatus {
  id: string;
  step: number;
  round: number;
  phase: "round" | "boundary" | "done";
  verdict: string | null;
  pending: string[];
  dueDeliveries: string[];
  registry: RegistryEntry[];
  state: string;
}

export interface Reply {
  query: string;
  value: string;
}

export class ServiceRejection extends Error {
  readonly status: number;

  constructor(message: string, status: number) {
    super(message);
    this.status = status;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StepperClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = fetch) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      const message = typeof payload.error === "string" ? payload.error : response.statusText;
      throw new ServiceRejection(message, response.status);
    }
    return payload as T;
  }

  async createSession(program: string, state: string, scenario?: string): Promise<{ id: string; status: SessionStatus }> {
    return this.request("POST", "/session", { program, state, scenario });
  }

  async status(id: string): Promise<SessionStatus> {
    return this.request("GET", `/session/${id}/status`);
  }

  async postRound(id: string, replies: Reply[]): Promise<{ status: SessionStatus }> {
    return this.request("POST", `/session/${id}/round`, { replies });
  }

  async postBoundary(id: string, deliveries: string[]): Promise<{ status: SessionStatus }> {
    return this.request("POST", `/session/${id}/boundary`, { deliveries });
  }

  async trace(id: string): Promise<string> {
    const payload = await this.request<{ trace: string }>("GET", `/session/${id}/trace`);
    return payload.trace;
  }
}
