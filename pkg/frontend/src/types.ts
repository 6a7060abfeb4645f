/** Wire types of the marking service HTTP API (all routes under /api/v1). */

export type MinutiaKind = "ending" | "bifurcation";
export type SingularKind = "core" | "delta";
export type QualityLevel = "poor" | "fair" | "good";
export type TemplateStatus = "draft" | "marked" | "under_review" | "final";

export interface ImageRefJson {
  db: string;
  finger: number;
  impression: number;
}

export interface MinutiaJson {
  kind: MinutiaKind;
  x: number;
  y: number;
  angle_deg: number;
  /** 0..100 byte or a poor/fair/good label (service maps labels to 20/50/80). */
  quality: number | QualityLevel;
}

export interface SingularPointJson {
  kind: SingularKind;
  x: number;
  y: number;
  angle_deg: number | null;
}

export interface ReviewJson {
  reviewer: number;
  action: "approve" | "modify";
  revision: number;
  timestamp: string;
}

export interface TemplateStateJson {
  db: string;
  finger: number;
  impression: number;
  revision: number;
  status: TemplateStatus;
  marker: number | null;
  perceived_quality: QualityLevel | null;
  warning: string | null;
  reviews: ReviewJson[];
  template: {
    minutiae: MinutiaJson[];
    singular_points: SingularPointJson[];
  } | null;
}

export interface PutTemplateBody {
  minutiae: MinutiaJson[];
  singular_points: SingularPointJson[];
  perceived_quality: QualityLevel;
  expected_revision: number;
  day_index?: number;
}

export interface ReviewBody {
  action: "approve" | "modify";
  minutiae?: MinutiaJson[];
  singular_points?: SingularPointJson[];
  perceived_quality?: QualityLevel;
  expected_revision?: number;
}

export interface ScheduleDayJson {
  db: string;
  day: number;
  images: ImageRefJson[];
}

export interface ScheduleJson {
  subject: number;
  days: ScheduleDayJson[];
}

/** Image scale metadata carried by the X-* headers of the image route. */
export interface RenderMeta {
  widthPx: number;
  heightPx: number;
  pxPerCm: number;
  targetDisplayCm: number;
}
