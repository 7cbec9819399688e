from django.contrib import admin
from django.utils.html import format_html

from .models import ReconstructionRun, SimulationRun, TrainingRun

STATUS_COLORS = {
    'success': '#28a745',
    'failed': '#dc3545',
    'pending': '#ffc107',
}


class RunRecordAdmin(admin.ModelAdmin):
    """Read-only view of command run records."""

    list_filter = ('status', 'created_at')
    date_hierarchy = 'created_at'

    def get_readonly_fields(self, request, obj=None):
        return [f.name for f in self.model._meta.fields]

    def status_badge(self, obj):
        """Display status as a colored badge."""
        color = STATUS_COLORS.get(obj.status, '#6c757d')
        return format_html(
            '<span style="background-color: {}; color: white; padding: 3px 10px; border-radius: 3px; font-weight: bold;">{}</span>',
            color,
            obj.get_status_display()
        )
    status_badge.short_description = "Status"

    def has_add_permission(self, request):
        """Run records are only created by the management commands."""
        return False

    def has_delete_permission(self, request, obj=None):
        return False


@admin.register(SimulationRun)
class SimulationRunAdmin(RunRecordAdmin):
    list_display = ('phantom', 'target_counts', 'n_events', 'tof_ps', 'n_bins', 'realization', 'created_at', 'status_badge')
    list_filter = ('status', 'phantom', 'n_bins', 'created_at')
    search_fields = ('event_file', 'geometry_hash')


@admin.register(ReconstructionRun)
class ReconstructionRunAdmin(RunRecordAdmin):
    list_display = ('algorithm', 'target_counts', 'tof_ps', 'n_bins', 'psnr_display', 'ssim', 'created_at', 'status_badge')
    list_filter = ('status', 'algorithm', 'n_bins', 'created_at')
    search_fields = ('event_file', 'image_file')

    def psnr_display(self, obj):
        return "N/A" if obj.psnr is None else f"{obj.psnr:.2f} dB"
    psnr_display.short_description = "PSNR"


@admin.register(TrainingRun)
class TrainingRunAdmin(RunRecordAdmin):
    list_display = ('dataset_dir', 'n_pairs', 'epochs', 'n_phases', 'best_epoch', 'best_val_loss', 'created_at', 'status_badge')
    search_fields = ('dataset_dir', 'checkpoint_file')
