// A recording fetch stub: tests route requests to canned JSON and then
// assert on exactly which calls the UI made, in order.

import { ApiClient } from "../src/api.js";

export interface Call {
  method: string;
  path: string;
  body: unknown;
}

export type Router = (call: Call) => { status?: number; json?: unknown } | undefined;

export function stubClient(route: Router): { client: ApiClient; calls: Call[] } {
  const calls: Call[] = [];
  const impl = async (input: string, init?: RequestInit): Promise<Response> => {
    const call: Call = {
      method: init?.method ?? "GET",
      path: input,
      body: init?.body === undefined ? undefined : JSON.parse(String(init.body)),
    };
    calls.push(call);
    const out = route(call);
    if (!out) throw new Error(`unrouted ${call.method} ${call.path}`);
    const status = out.status ?? 200;
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => {
        if (out.json === undefined) throw new Error("no body");
        return out.json;
      },
    } as unknown as Response;
  };
  return { client: new ApiClient("", impl), calls };
}

/** Let every promise chain started by an event handler settle. */
export async function flush(): Promise<void> {
  for (let i = 0; i < 6; i++) {
    await new Promise<void>((resolve) => setTimeout(resolve, 0));
  }
}
