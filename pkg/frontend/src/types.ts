export interface SessionInfo {
  session_id: string;
  survey_id: string;
  n_questions: number;
}

export interface QuestionPayload {
  question_id: string;
  index: number;
  reference_images: string[];
  candidate_images: string[];
  allow_not_present: boolean;
}

export type NextResponse = QuestionPayload | { done: true };

export function isDone(r: NextResponse): r is { done: true } {
  return (r as { done?: boolean }).done === true;
}

export interface ResponseBody {
  question_id: string;
  chosen_option: number;
  rt_ms: number;
}

export const NOT_PRESENT_OPTION = 6;
