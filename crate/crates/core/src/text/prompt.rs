/// Prompt used to obtain five-part scene descriptions from a multimodal LLM.
pub const PROMPT: &str = "Describe the frame in five parts, and each part starts with a dash sign (-).\n\
The first part describes the image in general, including the weather conditions.\n\
The second to fifth parts describe the objects and estimate their depth (maximum 80 meters) in the right part, middle right part, middle left part, and left part of the image, respectively.\n";

pub fn render_prompt() -> String {
    PROMPT.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_contents() {
        let p = render_prompt();
        assert!(p.contains("five parts"));
        assert!(p.contains("maximum 80 meters"));
        assert_eq!(p.as_bytes(), render_prompt().as_bytes());
        assert_eq!(p.lines().count(), 3);
    }
}
