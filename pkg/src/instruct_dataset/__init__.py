from .templates import (TemplateId, RenderedPrompt, detect_template, render_prompt,
                        render_target, render_training_text, template_digest)
from .build import (InstructionInstance, build_instances, split_dataset,
                    export_instances, import_instances)

__version__ = '0.1.0'
name = 'instruct_dataset'
