// Typed client for the engine service. Every number shown anywhere in the
// UI comes out of these payloads untouched.

export interface TreeNode {
  name: string;
  attributes: string[];
  rows: number;
}

export interface TreeEdge {
  a: string;
  b: string;
  attrs: string[];
  views_ab: number;
  views_ba: number;
}

export interface JoinTreePayload {
  nodes: TreeNode[];
  edges: TreeEdge[];
  roots: Record<string, string>;
}

export interface SessionInfo {
  schema: string;
  app: string;
  threads: number;
  queries: string[];
  jointree: JoinTreePayload;
}

export interface ViewInfo {
  id: string;
  source: string;
  target: string;
  keys: string[];
  slots: number;
  consumers: string[];
}

export interface QueryInfo {
  id: string;
  root: string;
  group_by: string[];
  aggregates: number;
}

export interface ViewsPayload {
  views: ViewInfo[];
  queries: QueryInfo[];
}

export interface ReassignPayload {
  query: string;
  root: string;
  jointree: JoinTreePayload;
  views: ViewInfo[];
  queries: QueryInfo[];
}

export interface GroupInfo {
  id: string;
  node: string;
  outputs: string[];
  incoming: string[];
  wave: number;
}

export interface GroupsPayload {
  groups: GroupInfo[];
  edges: [string, string][];
  waves: string[][];
}

export interface CodeLine {
  kind: string;
  text: string;
}

export interface CodePayload {
  group: string;
  node: string;
  order: string[];
  registers: { local: number; running: number };
  lines: CodeLine[];
}

export interface LinregModel {
  kind: "linreg";
  features: string[];
  label: string;
  lambda: number;
  slots: [string, string | null][];
  theta: number[];
  rows: number;
  iterations: number;
  converged: boolean;
  objective_trace: number[];
  engine_queries: string[];
  timings_ms: Record<string, number>;
}

export interface CartNode {
  id: number;
  count: number;
  mean: number;
  variance: number;
  kind: "leaf" | "split";
  attribute?: string;
  op?: string;
  threshold?: number;
  yes?: CartNode;
  no?: CartNode;
}

export interface CartModel {
  kind: "cart";
  features: string[];
  label: string;
  max_depth: number;
  min_leaf: number;
  leaves: number;
  tree: CartNode;
  engine_queries: string[];
  timings_ms: Record<string, number>;
}

export interface RkmeansModel {
  kind: "rkmeans";
  dimensions: string[];
  k: number;
  k_per_dim: number | null;
  seed: number;
  per_dim_centroids: number[][];
  centroids: number[][];
  grid_size: number;
  rows: number;
  grid_weight_total: number;
  coreset_ratio: number;
  grid_objective: number;
  full_objective: number;
  baseline_objective: number;
  relative_gap: number;
  engine_queries: string[];
  timings_ms: Record<string, number>;
}

export type ModelJson = LinregModel | CartModel | RkmeansModel;

export interface RunPayload {
  app: string;
  threads: number;
  results?: Record<string, unknown>;
  report?: Record<string, unknown>;
  model?: ModelJson;
  timings_ms: Record<string, number>;
}

export interface AssignPayload {
  index: number;
  centroid: number[];
  distance: number;
}

export type MetricsPayload = Record<string, unknown>;

export interface AppConfig {
  kind: string;
  [key: string]: unknown;
}

export interface SessionRequest {
  schema: string;
  app?: AppConfig;
  threads?: number;
  seed?: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchImpl(this.base + path, init);
    let parsed: any = null;
    try {
      parsed = await resp.json();
    } catch {
      // error pages without a JSON body fall through to the status check
    }
    if (!resp.ok) {
      const message = parsed?.error ?? parsed?.detail ?? `${method} ${path} failed`;
      throw new ApiError(resp.status, String(message));
    }
    return parsed as T;
  }

  createSession(req: SessionRequest): Promise<SessionInfo> {
    return this.request("POST", "/session", req);
  }

  jointree(): Promise<JoinTreePayload> {
    return this.request("GET", "/jointree");
  }

  views(filter?: { node?: string; direction?: string }): Promise<ViewsPayload> {
    const params = new URLSearchParams();
    if (filter?.node) params.set("node", filter.node);
    if (filter?.direction) params.set("direction", filter.direction);
    const qs = params.toString();
    return this.request("GET", qs ? `/views?${qs}` : "/views");
  }

  reassignRoot(queryId: string, node: string): Promise<ReassignPayload> {
    return this.request("POST", `/queries/${encodeURIComponent(queryId)}/root`, { node });
  }

  groups(): Promise<GroupsPayload> {
    return this.request("GET", "/groups");
  }

  code(groupId: string): Promise<CodePayload> {
    return this.request("GET", `/groups/${encodeURIComponent(groupId)}/code`);
  }

  run(threads?: number): Promise<RunPayload> {
    return this.request("POST", "/run", threads === undefined ? {} : { threads });
  }

  assign(point: number[]): Promise<AssignPayload> {
    return this.request("POST", "/rkmeans/assign", { point });
  }

  metrics(): Promise<MetricsPayload> {
    return this.request("GET", "/metrics");
  }
}
