// Typed client for the editing service. All shape state lives server-side;
// the UI only ever posts sketches and selection ids.

export interface MeshJson {
  vertices: number[][];
  faces: number[][];
  face_part: number[];
}

export interface EditPayload {
  mesh: MeshJson;
  presence: number[];
  completed: boolean[];
  empty: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(`${base}${path}`, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const text = await res.text();
  const data = text ? JSON.parse(text) : {};
  if (!res.ok) throw new ApiError(res.status, data as ApiErrorBody);
  return data as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  health(): Promise<{ status: string; model: string }> {
    return request(this.base, "/api/health");
  }

  async createSession(): Promise<string> {
    const out = await request<{ session_id: string }>(this.base, "/api/sessions", { method: "POST" });
    return out.session_id;
  }

  deleteSession(id: string): Promise<{ deleted: string }> {
    return request(this.base, `/api/sessions/${id}`, { method: "DELETE" });
  }

  generate(id: string, sketchPngBase64: string): Promise<EditPayload> {
    return request(this.base, `/api/sessions/${id}/generate`, {
      method: "POST",
      body: JSON.stringify({ sketch_png_base64: sketchPngBase64 }),
    });
  }

  select(id: string, partIds: number[]): Promise<{ selected: number[] }> {
    return request(this.base, `/api/sessions/${id}/select`, {
      method: "POST",
      body: JSON.stringify({ part_ids: partIds }),
    });
  }

  refine(id: string): Promise<EditPayload> {
    return request(this.base, `/api/sessions/${id}/refine`, { method: "POST", body: "{}" });
  }

  blend(id: string, sketchPngBase64: string): Promise<EditPayload> {
    return request(this.base, `/api/sessions/${id}/blend`, {
      method: "POST",
      body: JSON.stringify({ sketch_png_base64: sketchPngBase64 }),
    });
  }

  async outline(id: string, azimuth?: number, elevation?: number): Promise<string> {
    const params = new URLSearchParams();
    if (azimuth !== undefined) params.set("azimuth", String(azimuth));
    if (elevation !== undefined) params.set("elevation", String(elevation));
    const qs = params.size ? `?${params}` : "";
    const out = await request<{ sketch_png_base64: string }>(this.base, `/api/sessions/${id}/outline${qs}`);
    return out.sketch_png_base64;
  }

  undo(id: string): Promise<EditPayload> {
    return request(this.base, `/api/sessions/${id}/undo`, { method: "POST", body: "{}" });
  }
}
